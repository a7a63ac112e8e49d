"""Self-reference defect segmentation: match a defect patch against the
defect-free remainder of the same image, then subtract."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from . import kernels
from .errors import ErrorCode, InspectionError
from .imgproc import DiffParams, binarize_diff
from .periodicity import PeriodEstimate
from .types import InspectionImage, PatchBox


@dataclass
class BackgroundMatch:
    box: PatchBox
    ncc_score: float
    displacement: tuple[int, int]  # (dx, dy) from the defect box


@dataclass
class BinaryMask:
    bits: np.ndarray

    @property
    def defect_pixel_count(self) -> int:
        return int(self.bits.sum())


def zncc_scan_map(image: np.ndarray, patch: np.ndarray) -> np.ndarray:
    """ZNCC of `patch` at every top-left placement, via FFT correlation.

    Returns an (H - ph + 1, W - pw + 1) map; constant windows score 0.
    """
    image = np.asarray(image, dtype=np.float64)
    patch = np.asarray(patch, dtype=np.float64)
    ph, pw = patch.shape
    pz = patch - patch.mean()
    p_norm = np.sqrt((pz * pz).sum())
    # Numerator: sum(window * pz) == sum((window - mean) * pz) since pz is zero-mean.
    num = fftconvolve(image, pz[::-1, ::-1], mode="valid")
    ones = np.ones((ph, pw))
    win_sum = fftconvolve(image, ones, mode="valid")
    win_sq = fftconvolve(image * image, ones, mode="valid")
    win_var = np.maximum(win_sq - win_sum * win_sum / (ph * pw), 0.0)
    denom = p_norm * np.sqrt(win_var)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom > 1e-9, num / np.maximum(denom, 1e-300), 0.0)
    return np.clip(out, -1.0, 1.0)


def _seeded_candidates(
    defect_box: PatchBox, period: int, width: int, height: int
) -> list[tuple[int, int]]:
    out = []
    k = 1
    while defect_box.x - k * period >= 0 or defect_box.x + k * period + defect_box.width <= width:
        for x in (defect_box.x - k * period, defect_box.x + k * period):
            if 0 <= x and x + defect_box.width <= width and abs(x - defect_box.x) >= defect_box.width:
                out.append((x, defect_box.y))
        k += 1
    out.sort()
    return out


def match_background(
    image: InspectionImage,
    defect_box: PatchBox,
    estimate: PeriodEstimate | None = None,
    theta_ncc: float = 0.8,
) -> BackgroundMatch:
    """Best non-overlapping placement of the defect patch elsewhere in the image.

    Period multiples in x are tried first; a full stride-1 scan runs only when
    the seeded search stays below theta_ncc. Ties resolve to the smallest
    (dy, dx) via row-major ordering.
    """
    gray = image.gray()
    if not defect_box.in_bounds(image.width, image.height):
        raise InspectionError(ErrorCode.SPEC_INVALID, "defect box out of bounds")
    patch = defect_box.crop(gray)
    best_score = -2.0
    best_xy: tuple[int, int] | None = None
    if estimate is not None:
        cands = _seeded_candidates(defect_box, estimate.T, image.width, image.height)
        if cands:
            xs = np.array([c[0] for c in cands])
            ys = np.array([c[1] for c in cands])
            scores = kernels.zncc_many(gray, patch, xs, ys)
            idx = int(np.argmax(scores))
            best_score = float(scores[idx])
            best_xy = (int(xs[idx]), int(ys[idx]))
    if best_score < theta_ncc:
        score_map = zncc_scan_map(gray, patch)
        my, mx = score_map.shape
        ys, xs = np.mgrid[0:my, 0:mx]
        # Exclude placements whose box overlaps the defect box.
        overlap = (
            (xs + defect_box.width > defect_box.x)
            & (xs < defect_box.x2)
            & (ys + defect_box.height > defect_box.y)
            & (ys < defect_box.y2)
        )
        score_map = np.where(overlap, -2.0, score_map)
        flat = int(np.argmax(score_map))
        sy, sx = divmod(flat, mx)
        if score_map[sy, sx] > best_score:
            best_score = float(score_map[sy, sx])
            best_xy = (int(sx), int(sy))
    if best_xy is None or best_score < theta_ncc:
        raise InspectionError(ErrorCode.NO_MATCH, f"best score {best_score:.3f} < {theta_ncc}")
    box = PatchBox(x=best_xy[0], y=best_xy[1], width=defect_box.width, height=defect_box.height)
    return BackgroundMatch(
        box=box,
        ncc_score=best_score,
        displacement=(box.x - defect_box.x, box.y - defect_box.y),
    )


def segment_defect(
    image: InspectionImage,
    defect_box: PatchBox,
    match: BackgroundMatch,
    params: DiffParams = DiffParams(),
) -> BinaryMask:
    """Binary mask of the defect pixels inside the patch."""
    gray = image.gray()
    diff = np.abs(defect_box.crop(gray) - match.box.crop(gray))
    return BinaryMask(bits=binarize_diff(diff, params))


def mask_to_image_frame(mask: BinaryMask, defect_box: PatchBox, image_dims: tuple[int, int]) -> np.ndarray:
    """Embed a patch-local mask into a full-size boolean canvas."""
    width, height = image_dims
    canvas = np.zeros((height, width), dtype=bool)
    canvas[defect_box.y : defect_box.y2, defect_box.x : defect_box.x2] = mask.bits
    return canvas


def segment_with_fallback(
    image: InspectionImage,
    defect_box: PatchBox,
    estimate: PeriodEstimate | None,
    theta_ncc: float = 0.8,
    params: DiffParams = DiffParams(),
) -> tuple[BinaryMask, BackgroundMatch | None]:
    """Whole-patch match, per-tile stitching for wide patches, then the
    referential-image diff as a last resort."""
    try:
        match = match_background(image, defect_box, estimate, theta_ncc)
        return segment_defect(image, defect_box, match, params), match
    except InspectionError as err:
        if err.code is not ErrorCode.NO_MATCH:
            raise
    if defect_box.width > 224 or defect_box.height > 224:
        bits = np.zeros((defect_box.height, defect_box.width), dtype=bool)
        done = True
        for ty in range(0, defect_box.height, 224):
            for tx in range(0, defect_box.width, 224):
                tile = PatchBox(x=defect_box.x + tx, y=defect_box.y + ty)
                try:
                    m = match_background(image, tile, estimate, theta_ncc)
                    bits[ty : ty + 224, tx : tx + 224] = segment_defect(image, tile, m, params).bits
                except InspectionError as err:
                    if err.code is not ErrorCode.NO_MATCH:
                        raise
                    done = False
        if done:
            return BinaryMask(bits=bits), None
    if estimate is not None and estimate.clean_offset is not None:
        from .reference import build_reference

        ref = build_reference(image, estimate)
        w = min(defect_box.x2, ref.pixels.shape[1]) - defect_box.x
        bits = np.zeros((defect_box.height, defect_box.width), dtype=bool)
        if w > 0:
            diff = np.abs(
                image.gray()[defect_box.y : defect_box.y2, defect_box.x : defect_box.x + w]
                - ref.pixels[defect_box.y : defect_box.y2, defect_box.x : defect_box.x + w]
            )
            bits[:, :w] = binarize_diff(diff, params)
        return BinaryMask(bits=bits), None
    raise InspectionError(ErrorCode.NO_MATCH, "no background match and no clean period")


def offline_template_mask(
    image: InspectionImage,
    template: InspectionImage,
    defect_box: PatchBox,
    params: DiffParams = DiffParams(),
) -> BinaryMask:
    """Baseline segmentation against a stored template image (not self-reference).

    Kept for comparative robustness measurements; quality-mismatched templates
    inflate false positives, which is what self-reference avoids.
    """
    diff = np.abs(defect_box.crop(image.gray()) - defect_box.crop(template.gray()))
    return BinaryMask(bits=binarize_diff(diff, params))
