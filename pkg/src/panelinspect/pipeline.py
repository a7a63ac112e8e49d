"""End-to-end inspection pipeline for one image: period estimate, sliding-window
detection, self-reference segmentation, channel-augmented classification and
impact evaluation, with per-stage timings."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .classify import ChannelMode, LogisticModel, build_channel_stack
from .errors import ErrorCode, InspectionError
from .imgproc import DiffParams
from .impact import ImpactVerdict, Layout, evaluate_impact
from .patchdetect import BinaryPatchClassifier, detect
from .periodicity import PeriodEstimate, estimate_period
from .selfref import BackgroundMatch, BinaryMask, mask_to_image_frame, segment_with_fallback
from .types import InspectionImage, PatchBox


@dataclass(frozen=True)
class PipelineConfig:
    theta_det: float = 0.5
    theta_ncc: float = 0.8
    channel_mode: ChannelMode = ChannelMode.RGB_G
    diff_params: DiffParams = DiffParams()
    multi_defect: bool = False


@dataclass
class DefectRecord:
    patch_box: PatchBox
    background_box: PatchBox | None
    ncc: float | None
    mask: BinaryMask
    class_scores: dict[str, float]
    top_class: str | None
    impact: list[ImpactVerdict] = field(default_factory=list)


@dataclass
class PipelineResult:
    verdict: str  # "defect" | "no_defect"
    defects: list[DefectRecord]
    timings_ms: dict[str, float]
    top_score: float
    period: PeriodEstimate | None


def _staged(timings: dict[str, float], stage: str):
    class _Timer:
        def __enter__(self):
            self.t0 = time.perf_counter()

        def __exit__(self, exc_type, exc, tb):
            timings[stage] = timings.get(stage, 0.0) + (time.perf_counter() - self.t0) * 1000.0
            if isinstance(exc, InspectionError):
                exc.details.setdefault("stage", stage)
            return False

    return _Timer()


def run_pipeline(
    image: InspectionImage,
    binary_classifier: BinaryPatchClassifier,
    defect_classifier: LogisticModel | None = None,
    layout: Layout | None = None,
    config: PipelineConfig = PipelineConfig(),
) -> PipelineResult:
    timings: dict[str, float] = {}
    estimate: PeriodEstimate | None = None
    with _staged(timings, "period"):
        try:
            estimate = estimate_period(image)
        except InspectionError as err:
            if err.code not in (ErrorCode.NOT_PERIODIC, ErrorCode.ALL_DIRTY):
                raise
            # Degraded mode: matching falls back to the exhaustive scan.
            estimate = None
    with _staged(timings, "detect"):
        boxes, top_score = detect(
            binary_classifier, image, threshold=config.theta_det, multi_defect=config.multi_defect
        )
    if not boxes:
        return PipelineResult(
            verdict="no_defect", defects=[], timings_ms=timings, top_score=top_score, period=estimate
        )
    defects = []
    for box in boxes:
        match: BackgroundMatch | None = None
        with _staged(timings, "segment"):
            mask, match = segment_with_fallback(
                image, box, estimate, theta_ncc=config.theta_ncc, params=config.diff_params
            )
        class_scores: dict[str, float] = {}
        top_class = None
        if defect_classifier is not None:
            with _staged(timings, "classify"):
                mode = defect_classifier.mode
                needs_bg = mode in (ChannelMode.RGB_G, ChannelMode.RGB2)
                if needs_bg and match is None:
                    mode = ChannelMode.RGB_S if mask is not None else ChannelMode.RGB
                if mode == defect_classifier.mode:
                    stack = build_channel_stack(image, box, match, mask, mode)
                    class_scores = defect_classifier.predict(stack)
                    top_class = max(class_scores, key=class_scores.get)
        verdicts: list[ImpactVerdict] = []
        if layout is not None:
            with _staged(timings, "impact"):
                frame = mask_to_image_frame(mask, box, (image.width, image.height))
                verdicts = evaluate_impact(frame, layout)
        defects.append(
            DefectRecord(
                patch_box=box,
                background_box=match.box if match else None,
                ncc=match.ncc_score if match else None,
                mask=mask,
                class_scores=class_scores,
                top_class=top_class,
                impact=verdicts,
            )
        )
    return PipelineResult(
        verdict="defect", defects=defects, timings_ms=timings, top_score=top_score, period=estimate
    )
