"""Error codes shared by every pipeline stage and the service layer."""
from __future__ import annotations

from enum import Enum


class ErrorCode(str, Enum):
    # periodicity
    WINDOW_TOO_TALL = "periodicity/WINDOW_TOO_TALL"
    BAD_STEP = "periodicity/BAD_STEP"
    CURVE_TOO_SHORT = "periodicity/CURVE_TOO_SHORT"
    NO_PEAK = "periodicity/NO_PEAK"
    NOT_PERIODIC = "periodicity/NOT_PERIODIC"
    ALL_DIRTY = "periodicity/ALL_DIRTY"
    # reference
    NO_CLEAN_PERIOD = "reference/NO_CLEAN_PERIOD"
    LABEL_MISSING = "reference/LABEL_MISSING"
    NO_NEGATIVE_SOURCES = "reference/NO_NEGATIVE_SOURCES"
    # patch detection
    IMAGE_TOO_SMALL = "patchdetect/IMAGE_TOO_SMALL"
    CLASSIFIER_FAILURE = "patchdetect/CLASSIFIER_FAILURE"
    # self-reference segmentation
    NO_MATCH = "selfref/NO_MATCH"
    # classification
    MISSING_BACKGROUND = "classify/MISSING_BACKGROUND"
    MISSING_MASK = "classify/MISSING_MASK"
    INSUFFICIENT_DATA = "classify/INSUFFICIENT_DATA"
    EMPTY_SPLIT = "classify/EMPTY_SPLIT"
    # impact
    SCHEMA_ERROR = "impact/SCHEMA_ERROR"
    UNKNOWN_REGION = "impact/UNKNOWN_REGION"
    FRAME_MISMATCH = "impact/FRAME_MISMATCH"
    # synthetic generator
    SPEC_INVALID = "synthgen/SPEC_INVALID"
    OUT_OF_BOUNDS = "synthgen/OUT_OF_BOUNDS"
    # service
    MODEL_UNAVAILABLE = "service/MODEL_UNAVAILABLE"
    NODE_SATURATED = "service/NODE_SATURATED"
    SINK_UNREACHABLE = "service/SINK_UNREACHABLE"
    DUPLICATE_VERSION = "service/DUPLICATE_VERSION"
    UNKNOWN_MODEL = "service/UNKNOWN_MODEL"
    UNKNOWN_JOB = "service/UNKNOWN_JOB"
    UNKNOWN_NODE = "service/UNKNOWN_NODE"
    UNKNOWN_CANDIDATE = "service/UNKNOWN_CANDIDATE"
    CONFLICT = "service/CONFLICT"


class InspectionError(Exception):
    """Raised by pipeline and service operations with a stable machine code."""

    def __init__(self, code: ErrorCode, message: str = "", **details):
        self.code = code
        self.details = details
        super().__init__(f"{code.value}: {message}" if message else code.value)
