"""Sliding-window defect patch identification and region merging."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import ErrorCode, InspectionError
from .types import InspectionImage, PatchBox

PATCH = 224
STRIDE = 112


class BinaryPatchClassifier(Protocol):
    def score(self, patch: np.ndarray) -> float:
        """Defect probability in [0, 1] for a gray or RGB 224x224 patch."""


@dataclass
class WindowGrid:
    anchors: list[tuple[int, int]]  # (x, y), row-major
    window: int = PATCH
    stride: int = STRIDE


@dataclass
class PatchScore:
    box: PatchBox
    defect_probability: float


def _axis_anchors(extent: int) -> list[int]:
    anchors = list(range(0, extent - PATCH + 1, STRIDE))
    edge = extent - PATCH
    if anchors[-1] != edge:
        anchors.append(edge)
    return anchors


def slide_windows(image_dims: tuple[int, int]) -> WindowGrid:
    """Stride-112 grid of 224-windows plus edge anchors for full coverage."""
    width, height = image_dims
    if width < PATCH or height < PATCH:
        raise InspectionError(ErrorCode.IMAGE_TOO_SMALL, f"{width}x{height} < {PATCH}")
    anchors = [(x, y) for y in _axis_anchors(height) for x in _axis_anchors(width)]
    return WindowGrid(anchors=anchors)


def score_windows(
    classifier: BinaryPatchClassifier, image: InspectionImage, grid: WindowGrid
) -> list[PatchScore]:
    scores = []
    for idx, (x, y) in enumerate(grid.anchors):
        box = PatchBox(x=x, y=y)
        try:
            prob = float(classifier.score(box.crop(image.pixels)))
        except Exception as exc:
            raise InspectionError(
                ErrorCode.CLASSIFIER_FAILURE, str(exc), anchor_index=idx
            ) from exc
        scores.append(PatchScore(box=box, defect_probability=prob))
    return scores


def select_defect_patch(
    scores: list[PatchScore], threshold: float = 0.5
) -> tuple[PatchBox | None, float]:
    """Argmax box if it clears the threshold, else none (no-defect outcome).

    Ties go to the smallest (y, x) anchor; row-major scoring order makes the
    first strict maximum exactly that.
    """
    if not scores:
        raise InspectionError(ErrorCode.SPEC_INVALID, "scores must be non-empty")
    best = max(scores, key=lambda s: s.defect_probability)
    if best.defect_probability < threshold:
        return None, best.defect_probability
    return best.box, best.defect_probability


def merge_regions(candidate_boxes: list[PatchBox], image_dims: tuple[int, int]) -> list[PatchBox]:
    """Cluster grid boxes within one stride of each other and replace each
    cluster with the smallest 224/448 box containing its union."""
    if not candidate_boxes:
        return []
    n = len(candidate_boxes)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    centers = [b.center for b in candidate_boxes]
    for i in range(n):
        for j in range(i + 1, n):
            if abs(centers[i][0] - centers[j][0]) <= STRIDE and abs(centers[i][1] - centers[j][1]) <= STRIDE:
                parent[find(i)] = find(j)
    clusters: dict[int, list[PatchBox]] = {}
    for i, box in enumerate(candidate_boxes):
        clusters.setdefault(find(i), []).append(box)
    width, height = image_dims
    merged = []
    for members in clusters.values():
        x0 = min(b.x for b in members)
        y0 = min(b.y for b in members)
        x1 = max(b.x2 for b in members)
        y1 = max(b.y2 for b in members)
        bw = PATCH if x1 - x0 <= PATCH else 448
        bh = PATCH if y1 - y0 <= PATCH else 448
        if x1 - x0 <= bw:
            # Center on the union, then shift as needed to contain it.
            x = min(max(round((x0 + x1) / 2 - bw / 2), x1 - bw), x0)
        else:
            x = round((x0 + x1) / 2 - bw / 2)
        if y1 - y0 <= bh:
            y = min(max(round((y0 + y1) / 2 - bh / 2), y1 - bh), y0)
        else:
            y = round((y0 + y1) / 2 - bh / 2)
        x = int(np.clip(x, 0, max(0, width - bw)))
        y = int(np.clip(y, 0, max(0, height - bh)))
        merged.append(PatchBox(x=x, y=y, width=bw, height=bh))
    merged.sort(key=lambda b: (b.y, b.x))
    return merged


def detect(
    classifier: BinaryPatchClassifier,
    image: InspectionImage,
    threshold: float = 0.5,
    multi_defect: bool = False,
) -> tuple[list[PatchBox], float]:
    """Full detection stage: grid, scores, merge; single best cluster unless
    multi_defect. Empty list means the image is judged defect-free."""
    grid = slide_windows((image.width, image.height))
    scores = score_windows(classifier, image, grid)
    top = max(s.defect_probability for s in scores)
    hot = [s for s in scores if s.defect_probability >= threshold]
    if not hot:
        return [], top
    merged = merge_regions([s.box for s in hot], (image.width, image.height))
    if multi_defect or len(merged) <= 1:
        return merged, top
    # Keep the cluster containing the highest-scoring member box.
    def cluster_peak(cluster_box: PatchBox) -> float:
        return max(
            (s.defect_probability for s in hot if cluster_box.intersects(s.box)), default=0.0
        )

    best = max(merged, key=cluster_peak)
    return [best], top


class MaskLookupClassifier:
    """BinaryPatchClassifier backed by a ground-truth mask of the same image.

    Works by pixel-content lookup: windows are located by matching the crop
    against the source image, so it satisfies the plain score(patch) contract.
    """

    def __init__(self, image: InspectionImage, mask: np.ndarray | None):
        self.image = image
        self.mask = mask
        grid = slide_windows((image.width, image.height))
        self._by_key = {}
        for x, y in grid.anchors:
            box = PatchBox(x=x, y=y)
            key = box.crop(image.pixels).tobytes()
            hit = bool(mask is not None and box.crop(mask).any())
            # First anchor wins on identical content; content ties imply
            # identical periodic texture, where any hit marks all copies.
            if key not in self._by_key or hit:
                self._by_key[key] = hit

    def score(self, patch: np.ndarray) -> float:
        return 1.0 if self._by_key.get(np.asarray(patch).tobytes(), False) else 0.0
