"""Shared difference-image processing: blur, binarize, morphology, components."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class DiffParams:
    blur_radius: int = 2
    threshold_mode: str = "otsu"  # "otsu" | "fixed"
    fixed_threshold: float = 40.0
    # Otsu always splits something; ignore thresholds below the noise floor.
    noise_floor: float = 10.0
    morph_radius: int = 2
    min_area: int = 30


def disk(radius: int) -> np.ndarray:
    yy, xx = np.ogrid[-radius : radius + 1, -radius : radius + 1]
    return xx * xx + yy * yy <= radius * radius


def otsu_threshold(values: np.ndarray) -> float:
    """Classic between-class-variance maximizer over a 256-bin histogram."""
    hist, edges = np.histogram(values.ravel(), bins=256, range=(0.0, 256.0))
    total = hist.sum()
    if total == 0:
        return 0.0
    centers = (edges[:-1] + edges[1:]) / 2.0
    weight1 = np.cumsum(hist)
    weight2 = total - weight1
    cum = np.cumsum(hist * centers)
    mean1 = np.divide(cum, weight1, out=np.zeros_like(cum), where=weight1 > 0)
    mean2 = np.divide(cum[-1] - cum, weight2, out=np.zeros_like(cum), where=weight2 > 0)
    var_between = weight1 * weight2 * (mean1 - mean2) ** 2
    return float(centers[int(np.argmax(var_between))])


def binarize_diff(diff: np.ndarray, params: DiffParams) -> np.ndarray:
    """|difference| image -> boolean mask via blur, threshold, open+close."""
    smooth = diff.astype(np.float64)
    if params.blur_radius > 0:
        smooth = ndimage.uniform_filter(smooth, size=2 * params.blur_radius + 1)
    if params.threshold_mode == "otsu":
        threshold = max(otsu_threshold(smooth), params.noise_floor)
    else:
        threshold = params.fixed_threshold
    mask = smooth > threshold
    if params.morph_radius > 0 and mask.any():
        selem = disk(params.morph_radius)
        mask = ndimage.binary_opening(mask, structure=selem)
        mask = ndimage.binary_closing(mask, structure=selem)
    return mask


def connected_components(mask: np.ndarray, min_area: int) -> list[dict]:
    """8-connected components of `mask` with area >= min_area, largest first."""
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    regions = []
    for idx in range(1, count + 1):
        ys, xs = np.nonzero(labels == idx)
        if ys.size < min_area:
            continue
        regions.append(
            dict(
                bbox=(int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1)),
                area=int(ys.size),
                centroid=(float(xs.mean()), float(ys.mean())),
            )
        )
    regions.sort(key=lambda r: -r["area"])
    return regions
