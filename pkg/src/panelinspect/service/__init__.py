"""Inspection service: job dispatch, model scheduling, result delivery and the
labeling-candidate store behind the screening API."""
from .controller import Controller, ControllerConfig, SimulatedNode
from .labeling import LabelingStore
from .registry import ModelDescriptor, ModelRegistry
from .scheduler import DeploymentPlan, PlanEntry, ScheduleAction, schedule_models
from .sink import DeliveryReport, FileSink, ResultSink, SinkConfig
from .store import Store

__all__ = [
    "Controller",
    "ControllerConfig",
    "DeliveryReport",
    "DeploymentPlan",
    "FileSink",
    "LabelingStore",
    "ModelDescriptor",
    "ModelRegistry",
    "PlanEntry",
    "ResultSink",
    "ScheduleAction",
    "SimulatedNode",
    "SinkConfig",
    "Store",
    "schedule_models",
]
