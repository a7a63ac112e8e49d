"""Append-only model registry with version status control."""
from __future__ import annotations

from dataclasses import asdict, dataclass

from ..errors import ErrorCode, InspectionError
from .store import Store

MODEL_STATUSES = ("registered", "loading", "loaded", "unloading", "retired")


@dataclass(frozen=True)
class ModelDescriptor:
    model_id: str
    version: str
    product_id: str
    layer_id: str
    channel_mode: str
    artifact: str  # path to a saved model file
    status: str = "registered"

    @property
    def scope(self) -> tuple[str, str]:
        return (self.product_id, self.layer_id)

    @property
    def key(self) -> tuple[str, str]:
        return (self.model_id, self.version)

    def to_dict(self) -> dict:
        return asdict(self)


class ModelRegistry:
    """Versions are only ever added or status-flipped, never deleted."""

    def __init__(self, store: Store):
        self._store = store

    def register(self, descriptor: ModelDescriptor) -> ModelDescriptor:
        if descriptor.status not in MODEL_STATUSES:
            raise InspectionError(ErrorCode.SCHEMA_ERROR, f"bad status {descriptor.status!r}")
        existing = self._store.query(
            "SELECT 1 FROM models WHERE model_id=? AND version=?", descriptor.key
        )
        if existing:
            raise InspectionError(
                ErrorCode.DUPLICATE_VERSION,
                f"{descriptor.model_id}@{descriptor.version} already registered",
            )
        self._store.execute(
            "INSERT INTO models VALUES (?,?,?,?,?,?,?)",
            (
                descriptor.model_id,
                descriptor.version,
                descriptor.product_id,
                descriptor.layer_id,
                descriptor.channel_mode,
                descriptor.artifact,
                descriptor.status,
            ),
        )
        return descriptor

    def get(self, model_id: str, version: str) -> ModelDescriptor:
        rows = self._store.query(
            "SELECT * FROM models WHERE model_id=? AND version=?", (model_id, version)
        )
        if not rows:
            raise InspectionError(ErrorCode.UNKNOWN_MODEL, f"{model_id}@{version}")
        return ModelDescriptor(**dict(rows[0]))

    def retire(self, model_id: str, version: str) -> ModelDescriptor:
        self.get(model_id, version)
        self._store.execute(
            "UPDATE models SET status='retired' WHERE model_id=? AND version=?",
            (model_id, version),
        )
        return self.get(model_id, version)

    def list_models(self) -> list[ModelDescriptor]:
        rows = self._store.query("SELECT * FROM models ORDER BY model_id, version")
        return [ModelDescriptor(**dict(r)) for r in rows]

    def for_scope(self, product_id: str, layer_id: str) -> list[ModelDescriptor]:
        rows = self._store.query(
            "SELECT * FROM models WHERE product_id=? AND layer_id=? AND status != 'retired' "
            "ORDER BY model_id, version",
            (product_id, layer_id),
        )
        return [ModelDescriptor(**dict(r)) for r in rows]
