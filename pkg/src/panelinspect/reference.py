"""Referential-image reconstruction, coarse defect localization and
auto-labeling of patch datasets from image-level labels."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ErrorCode, InspectionError
from .imgproc import DiffParams, binarize_diff, connected_components
from .periodicity import PeriodEstimate
from .types import InspectionImage, PatchBox

PATCH = 224


@dataclass
class ReferentialImage:
    pixels: np.ndarray  # gray, M x (T*C)
    source_clean_offset: int
    T: int
    C: int


@dataclass
class CoarseRegion:
    bbox: tuple[int, int, int, int]  # x, y, w, h
    area: int
    centroid: tuple[float, float]


@dataclass
class PatchLabelCandidate:
    image_id: str
    patch: PatchBox
    proposed_label: str  # "defect" | "no_defect"
    sources: set[str] = field(default_factory=set)
    status: str = "pending"  # pending | accepted | rejected
    decided_by: str = ""


@dataclass(frozen=True)
class AutolabelPolicy:
    # Fraction of total heatmap mass inside a patch needed to count the
    # heatmap as a confirming source.
    theta_hm: float = 0.3
    auto_accept_both: bool = True


def build_reference(image: InspectionImage, estimate: PeriodEstimate) -> ReferentialImage:
    """Tile the clean period C times (gray)."""
    if estimate.clean_offset is None:
        raise InspectionError(ErrorCode.NO_CLEAN_PERIOD, "estimate has no clean period")
    gray = image.gray()
    t, c = estimate.T, estimate.C
    period = gray[:, estimate.clean_offset : estimate.clean_offset + t]
    cols = np.arange(t * c) % t
    return ReferentialImage(pixels=period[:, cols], source_clean_offset=estimate.clean_offset, T=t, C=c)


def diff_localize(
    image: InspectionImage, ref: ReferentialImage, params: DiffParams = DiffParams()
) -> list[CoarseRegion]:
    """Coarse defect regions from |I - R| on the first T*C columns."""
    width = ref.pixels.shape[1]
    diff = np.abs(image.gray()[:, :width] - ref.pixels)
    mask = binarize_diff(diff, params)
    return [CoarseRegion(**r) for r in connected_components(mask, params.min_area)]


def frame_patches(regions: list[CoarseRegion], image_dims: tuple[int, int]) -> list[PatchBox]:
    """One 224-box per region, centered on its centroid, clamped in-bounds.

    Near-duplicate boxes (IoU > 0.9) collapse to the larger-area region's box;
    `regions` is assumed sorted by area descending (diff_localize contract).
    """
    width, height = image_dims
    if width < PATCH or height < PATCH:
        raise InspectionError(ErrorCode.IMAGE_TOO_SMALL, f"image {width}x{height} < {PATCH}")
    boxes: list[PatchBox] = []
    for region in regions:
        cx, cy = region.centroid
        x = int(np.clip(round(cx) - PATCH // 2, 0, width - PATCH))
        y = int(np.clip(round(cy) - PATCH // 2, 0, height - PATCH))
        box = PatchBox(x=x, y=y)
        if not any(box.iou(other) > 0.9 for other in boxes):
            boxes.append(box)
    return boxes


def surrogate_heatmap(image: InspectionImage, estimate: PeriodEstimate) -> np.ndarray:
    """Blurred |I - R| normalized to total mass 1; uniform when featureless.

    Stands in for an activation-heatmap provider; columns beyond T*C carry no
    reference and get zero mass before normalization.
    """
    ref = build_reference(image, estimate)
    heat = np.zeros((image.height, image.width), dtype=np.float64)
    width = ref.pixels.shape[1]
    blur = ndimage.uniform_filter(np.abs(image.gray()[:, :width] - ref.pixels), size=9)
    # Sensor noise carries diffuse mass everywhere; keep only what clears a
    # robust per-image floor so mass concentrates on real saliency.
    floor = 3.0 * float(np.median(blur))
    heat[:, :width] = np.maximum(blur - floor, 0.0)
    total = heat.sum()
    if total <= 0:
        return np.full(heat.shape, 1.0 / heat.size)
    return heat / total


def heatmap_mass(heatmap: np.ndarray, box: PatchBox) -> float:
    return float(box.crop(heatmap).sum() / max(heatmap.sum(), 1e-12))


def autolabel_dataset(
    labeled_images: list[tuple[InspectionImage, str]],
    heatmap_provider,
    policy: AutolabelPolicy = AutolabelPolicy(),
    estimator=None,
    diff_params: DiffParams = DiffParams(),
) -> tuple[list[PatchLabelCandidate], list[dict]]:
    """Propose defect-patch labels by fusing periodic differencing and heatmaps.

    Candidates confirmed by both sources are auto-accepted; single-source ones
    stay pending for human screening. Defect-free images contribute nothing.
    Returns (candidates, warnings).
    """
    from .periodicity import estimate_period

    estimator = estimator or estimate_period
    candidates: list[PatchLabelCandidate] = []
    warnings: list[dict] = []
    for image, label in labeled_images:
        if label not in ("defect", "no_defect"):
            warnings.append(
                dict(image_id=image.meta.image_id, code=ErrorCode.LABEL_MISSING.value)
            )
            continue
        if label == "no_defect":
            continue
        try:
            estimate = estimator(image)
            ref = build_reference(image, estimate)
        except InspectionError as err:
            warnings.append(dict(image_id=image.meta.image_id, code=err.code.value))
            continue
        regions = diff_localize(image, ref, diff_params)
        boxes = frame_patches(regions, (image.width, image.height))
        if not boxes:
            warnings.append(
                dict(image_id=image.meta.image_id, code="reference/NO_CANDIDATE")
            )
            continue
        heatmap = heatmap_provider(image)
        for box in boxes:
            cand = PatchLabelCandidate(
                image_id=image.meta.image_id,
                patch=box,
                proposed_label="defect",
                sources={"periodic"},
            )
            if heatmap_mass(heatmap, box) >= policy.theta_hm:
                cand.sources.add("heatmap")
            if policy.auto_accept_both and cand.sources == {"periodic", "heatmap"}:
                cand.status = "accepted"
                cand.decided_by = "auto:double-confirm"
            candidates.append(cand)
    return candidates, warnings


def sample_negative_patches(
    defect_free_images: list[InspectionImage], count: int, rng_seed: int
) -> list[PatchLabelCandidate]:
    """Uniform random in-bounds 224-boxes from defect-free images, auto-accepted."""
    if count == 0:
        return []
    if not defect_free_images:
        raise InspectionError(ErrorCode.NO_NEGATIVE_SOURCES, "no defect-free images")
    rng = np.random.default_rng(rng_seed)
    out = []
    for _ in range(count):
        image = defect_free_images[int(rng.integers(0, len(defect_free_images)))]
        if image.width < PATCH or image.height < PATCH:
            raise InspectionError(ErrorCode.IMAGE_TOO_SMALL, image.meta.image_id)
        x = int(rng.integers(0, image.width - PATCH + 1))
        y = int(rng.integers(0, image.height - PATCH + 1))
        out.append(
            PatchLabelCandidate(
                image_id=image.meta.image_id,
                patch=PatchBox(x=x, y=y),
                proposed_label="no_defect",
                sources={"random"},
                status="accepted",
                decided_by="auto:negative-sampling",
            )
        )
    return out
