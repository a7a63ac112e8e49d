"""HTTP surface of the inspection service (JSON bodies, stable field names)."""
from __future__ import annotations

import base64
import io
import tempfile
import uuid
from dataclasses import asdict
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from PIL import Image

from ..errors import ErrorCode, InspectionError
from .controller import Controller
from .labeling import LabelingStore
from .registry import ModelDescriptor
from .scheduler import DeploymentPlan, PlanEntry, schedule_models

_STATUS_BY_CODE = {
    ErrorCode.UNKNOWN_JOB: 404,
    ErrorCode.UNKNOWN_MODEL: 404,
    ErrorCode.UNKNOWN_NODE: 404,
    ErrorCode.UNKNOWN_CANDIDATE: 404,
    ErrorCode.CONFLICT: 409,
    ErrorCode.DUPLICATE_VERSION: 409,
    ErrorCode.NODE_SATURATED: 429,
    ErrorCode.MODEL_UNAVAILABLE: 503,
    ErrorCode.SCHEMA_ERROR: 400,
}


def create_app(
    controller: Controller,
    labeling: LabelingStore,
    spool_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="panelinspect", version="1.0")
    spool = Path(spool_dir) if spool_dir else Path(tempfile.mkdtemp(prefix="panelinspect-"))
    spool.mkdir(parents=True, exist_ok=True)

    @app.exception_handler(InspectionError)
    async def _on_inspection_error(_request: Request, err: InspectionError):
        return JSONResponse(
            status_code=_STATUS_BY_CODE.get(err.code, 500),
            content=dict(error=err.code.value, message=str(err), details=err.details),
        )

    @app.post("/v1/inspect")
    async def inspect(request: Request):
        body = await request.json()
        image_ref = body.get("image_ref", "")
        if not image_ref and body.get("image_png_base64"):
            raw = base64.b64decode(body["image_png_base64"])
            path = spool / f"{uuid.uuid4().hex}.png"
            path.write_bytes(raw)
            image_ref = str(path)
        ticket = controller.submit_inspection(
            dict(
                image_ref=image_ref,
                product_id=body.get("product_id", ""),
                layer_id=body.get("layer_id", ""),
                idempotency_key=body.get("idempotency_key", ""),
            )
        )
        return ticket

    @app.get("/v1/results/{job_id}")
    async def get_result(job_id: str):
        return controller.get_result(job_id)

    @app.post("/v1/models")
    async def register_model(request: Request):
        body = await request.json()
        descriptor = ModelDescriptor(
            model_id=body["model_id"],
            version=body["version"],
            product_id=body.get("product_id", ""),
            layer_id=body.get("layer_id", ""),
            channel_mode=body.get("channel_mode", "RGB"),
            artifact=body.get("artifact", ""),
            status=body.get("status", "registered"),
        )
        return controller.registry.register(descriptor).to_dict()

    @app.get("/v1/models")
    async def list_models():
        return [m.to_dict() for m in controller.registry.list_models()]

    @app.post("/v1/plans")
    async def apply_plan(request: Request):
        body = await request.json()
        plan = DeploymentPlan(
            entries=[
                PlanEntry(
                    product_id=e["product_id"],
                    layer_id=e["layer_id"],
                    model_id=e["model_id"],
                    version=e["version"],
                    nodes=tuple(e.get("nodes", [])),
                )
                for e in body.get("entries", [])
            ]
        )
        actions = schedule_models(plan, controller.current_deployment(), controller.registry)
        # Desk-scale realization: apply the actions directly to node state.
        for action in actions:
            loaded = set(controller.nodes[action.node_id].loaded_models)
            if action.kind == "load":
                loaded.add((action.model_id, action.version))
            else:
                loaded.discard((action.model_id, action.version))
            controller.set_loaded(action.node_id, loaded)
        return dict(actions=[asdict(a) for a in actions])

    @app.get("/v1/nodes")
    async def list_nodes():
        return controller.list_nodes()

    @app.post("/v1/nodes/{node_id}/heartbeat")
    async def heartbeat(node_id: str, request: Request):
        body = await request.json() if await request.body() else {}
        loaded = body.get("loaded_models")
        controller.heartbeat(
            node_id, {tuple(m) for m in loaded} if loaded is not None else None
        )
        return dict(ok=True)

    @app.get("/v1/labeling/candidates")
    async def list_candidates(
        status: str | None = None, source: str | None = None, label: str | None = None
    ):
        return labeling.list_candidates(status=status, source=source, label=label)

    @app.post("/v1/labeling/candidates/{candidate_id}/decision")
    async def decide(candidate_id: str, request: Request):
        body = await request.json()
        return labeling.decide(
            candidate_id, body.get("decision", ""), body.get("decided_by", "")
        )

    @app.get("/v1/labeling/candidates/{candidate_id}/patch.png")
    async def candidate_patch(candidate_id: str):
        rec = labeling.get(candidate_id)
        if not rec["image_path"] or not Path(rec["image_path"]).exists():
            raise InspectionError(ErrorCode.UNKNOWN_CANDIDATE, "candidate has no stored image")
        image = Image.open(rec["image_path"])
        crop = image.crop(
            (rec["x"], rec["y"], rec["x"] + rec["width"], rec["y"] + rec["height"])
        )
        buf = io.BytesIO()
        crop.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/v1/deadletters")
    async def deadletters():
        if controller.publisher is None:
            return []
        return controller.publisher.dead_letters()

    return app
