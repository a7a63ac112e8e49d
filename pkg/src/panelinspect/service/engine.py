"""Computing-node inspection engine: decode the image, run the pipeline, and
shape an InspectionResult record with per-stage timings."""
from __future__ import annotations

import dataclasses
import io
import time
from typing import Callable

import numpy as np
from PIL import Image

from ..classify import LogisticModel
from ..errors import InspectionError
from ..impact import Layout
from ..patchdetect import BinaryPatchClassifier
from ..pipeline import PipelineConfig, run_pipeline
from ..types import ImageMeta, InspectionImage


class StageFailure(Exception):
    """Engine-side failure carrying the pipeline stage that broke."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"{stage}: {message}")


def decode_image(image_ref: str | bytes, image_id: str) -> tuple[InspectionImage, float]:
    """Load PNG bytes or a path; returns (image, decode time in ms)."""
    t0 = time.perf_counter()
    try:
        if isinstance(image_ref, bytes):
            pixels = np.asarray(Image.open(io.BytesIO(image_ref)).convert("RGB"))
        else:
            pixels = np.asarray(Image.open(image_ref).convert("RGB"))
        image = InspectionImage(pixels=pixels, meta=ImageMeta(image_id=image_id))
    except Exception as exc:
        raise StageFailure("decode", repr(exc)) from exc
    return image, (time.perf_counter() - t0) * 1000.0


def make_pipeline_engine(
    binary_classifier: BinaryPatchClassifier,
    defect_classifier: LogisticModel | None = None,
    layout: Layout | None = None,
    config: PipelineConfig = PipelineConfig(),
) -> Callable[[dict], dict]:
    """Engine callable for a node: job record in, InspectionResult record out.

    Raises StageFailure with the offending stage name; the controller records
    the job as failed (never lost) with that tag.
    """

    def engine(job: dict) -> dict:
        image, decode_ms = decode_image(job["image_ref"], job.get("image_id", job["job_id"]))
        try:
            result = run_pipeline(
                image, binary_classifier, defect_classifier, layout, config
            )
        except InspectionError as err:
            raise StageFailure(err.details.get("stage", "pipeline"), str(err)) from err
        timings = dict(result.timings_ms)
        timings["decode"] = decode_ms
        defects = []
        for rec in result.defects:
            defects.append(
                dict(
                    patch_box=dataclasses.astuple(rec.patch_box),
                    background_box=(
                        dataclasses.astuple(rec.background_box) if rec.background_box else None
                    ),
                    ncc=rec.ncc,
                    class_scores=rec.class_scores,
                    top_class=rec.top_class,
                    defect_pixels=rec.mask.defect_pixel_count,
                    impact=[dataclasses.asdict(v) for v in rec.impact],
                )
            )
        return dict(
            job_id=job["job_id"],
            image_id=image.meta.image_id,
            verdict=result.verdict,
            defects=defects,
            model=dict(model_id=job.get("model_id", ""), version=job.get("model_version", "")),
            timings_ms=timings,
        )

    return engine
