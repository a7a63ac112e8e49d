"""Plan-driven model scheduler: diff desired deployment against current node
state into load/unload actions with load-before-unload ordering."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ErrorCode, InspectionError
from .registry import ModelRegistry


@dataclass(frozen=True)
class PlanEntry:
    product_id: str
    layer_id: str
    model_id: str
    version: str
    nodes: tuple[str, ...]  # node ids that must serve this scope

    @property
    def scope(self) -> tuple[str, str]:
        return (self.product_id, self.layer_id)


@dataclass
class DeploymentPlan:
    entries: list[PlanEntry] = field(default_factory=list)

    def validate(self, registry: ModelRegistry) -> None:
        seen_scopes = set()
        for entry in self.entries:
            if entry.scope in seen_scopes:
                raise InspectionError(
                    ErrorCode.SCHEMA_ERROR, f"scope {entry.scope} listed twice in plan"
                )
            seen_scopes.add(entry.scope)
            registry.get(entry.model_id, entry.version)  # UNKNOWN_MODEL if absent


@dataclass(frozen=True)
class ScheduleAction:
    kind: str  # "load" | "unload"
    node_id: str
    model_id: str
    version: str


def schedule_models(
    plan: DeploymentPlan,
    current: dict[str, set[tuple[str, str]]],
    registry: ModelRegistry,
) -> list[ScheduleAction]:
    """Actions taking `current` {node_id: {(model_id, version)}} to the plan's state.

    Per node, loads come before unloads so a scope that stays served never goes
    dark during a version swap. Applying the resulting state again yields no
    actions. Order is deterministic: node_id, then (model_id, version).
    """
    plan.validate(registry)
    desired: dict[str, set[tuple[str, str]]] = {node: set() for node in current}
    for entry in plan.entries:
        for node in entry.nodes:
            desired.setdefault(node, set()).add((entry.model_id, entry.version))
    actions: list[ScheduleAction] = []
    for node_id in sorted(desired):
        have = current.get(node_id, set())
        want = desired[node_id]
        for model_id, version in sorted(want - have):
            actions.append(ScheduleAction("load", node_id, model_id, version))
        for model_id, version in sorted(have - want):
            actions.append(ScheduleAction("unload", node_id, model_id, version))
    return actions
