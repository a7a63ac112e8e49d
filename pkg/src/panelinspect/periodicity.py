"""Horizontal period estimation for periodic-texture panel images.

Pipeline: row-window projections -> lag-domain magnitude-sum curves ->
per-sub-image period -> median vote -> clean/dirty band classification.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ErrorCode, InspectionError
from .types import InspectionImage


@dataclass(frozen=True)
class ProjectionConfig:
    window_height: int = 64
    step: int = 32


@dataclass
class ProjectionSet:
    curves: list[np.ndarray]
    config: ProjectionConfig


@dataclass
class SamsfCurve:
    values: np.ndarray
    source_k: int


@dataclass
class PeriodEstimate:
    T: int
    C: int
    per_subimage_T: list[int | None]
    confidence: float
    clean_offset: int | None = None
    dirty_intervals: list[tuple[int, int]] = field(default_factory=list)

    @property
    def dirty_bands(self) -> list[int]:
        return [start // self.T for start, _ in self.dirty_intervals]


@dataclass(frozen=True)
class PeakConfig:
    """Peak selection over the lag curve.

    A lag qualifies when it is a local maximum reaching `rho` times the curve
    maximum within the bounds; the smallest such lag wins (the raw argmax can
    land on a harmonic multiple). A curve is rejected as non-periodic when it
    is nearly flat or when high values are not concentrated in peaks.
    """

    rho: float = 0.95
    flat_tol: float = 0.2
    crowd_tol: float = 0.5
    # A true period keeps prominent peaks at every multiple; candidates whose
    # comb collapses anywhere are rejected as shoulders/harmonic accidents.
    comb_rho: float = 0.9
    comb_slack: int = 2


def project_horizontal(image: InspectionImage, cfg: ProjectionConfig) -> ProjectionSet:
    """Sum gray rows over sliding windows; each window spans window_height+1 rows."""
    w, s = cfg.window_height, cfg.step
    if w >= image.height:
        raise InspectionError(ErrorCode.WINDOW_TOO_TALL, f"w={w} >= M={image.height}")
    if s < 1 or s > w:
        raise InspectionError(ErrorCode.BAD_STEP, f"s={s} must satisfy 1 <= s <= w")
    gray = image.gray()
    curves = []
    for k in range((image.height - w) // s + 1):
        # Inclusive row range: rows k*s .. k*s + w.
        curves.append(gray[k * s : k * s + w + 1].sum(axis=0))
    return ProjectionSet(curves=curves, config=cfg)


def samsf(curve: np.ndarray, source_k: int = 0) -> SamsfCurve:
    if np.asarray(curve).size < 4:
        raise InspectionError(ErrorCode.CURVE_TOO_SHORT, "need at least 4 samples")
    return SamsfCurve(values=kernels.samsf(curve), source_k=source_k)


def estimate_subimage_period(
    curve: SamsfCurve, bounds: tuple[int, int], peak_cfg: PeakConfig = PeakConfig()
) -> tuple[int, float]:
    """Smallest prominent peak of the lag curve within bounds -> (T_k, prominence)."""
    xi = curve.values
    n = xi.size
    t_min, t_max = bounds
    if not (2 <= t_min < t_max <= n // 2):
        raise InspectionError(ErrorCode.SPEC_INVALID, f"bad bounds {bounds} for N={n}")
    seg = xi[t_min : t_max + 1]
    mx = float(seg.max())
    if mx <= 0.0 or (mx - float(seg.min())) <= peak_cfg.flat_tol * mx:
        raise InspectionError(ErrorCode.NO_PEAK, "lag curve is flat within tolerance")
    high = seg >= peak_cfg.rho * mx
    if high.mean() > peak_cfg.crowd_tol:
        raise InspectionError(ErrorCode.NO_PEAK, "no distinct peak structure")
    lags = np.arange(t_min, t_max + 1)
    left = xi[lags - 1]
    right = xi[(lags + 1) % n]
    local_max = (seg >= left) & (seg >= right)
    candidates = lags[local_max & high]
    if candidates.size == 0:
        raise InspectionError(ErrorCode.NO_PEAK, "no prominent local maximum in bounds")
    t_k = None
    for cand in candidates:
        if _comb_holds(xi, int(cand), t_max, peak_cfg, mx):
            t_k = int(cand)
            break
    if t_k is None:
        t_k = int(candidates[np.argmax(xi[candidates])])
    return t_k, float(xi[t_k] / mx)


def _comb_holds(xi: np.ndarray, period: int, t_max: int, cfg: PeakConfig, mx: float) -> bool:
    # Each multiple is compared to its own neighborhood: the modular wrap seam
    # attenuates large lags globally, but a true multiple still dominates the
    # half-period window around it.
    del mx
    for mult in range(2 * period, t_max + 1, period):
        peak = xi[max(0, mult - cfg.comb_slack) : mult + cfg.comb_slack + 1].max()
        local = xi[max(0, mult - period // 2) : mult + period // 2 + 1].max()
        if peak < cfg.comb_rho * local:
            return False
    return True


def estimate_image_period(
    projections: ProjectionSet,
    bounds: tuple[int, int] | None = None,
    peak_cfg: PeakConfig = PeakConfig(),
) -> PeriodEstimate:
    """Median of per-sub-image periods; curves without a peak are excluded."""
    n = projections.curves[0].size
    if bounds is None:
        bounds = (32, n // 2)
    per_t: list[int | None] = []
    for k, curve in enumerate(projections.curves):
        try:
            t_k, _ = estimate_subimage_period(samsf(curve, k), bounds, peak_cfg)
            per_t.append(t_k)
        except InspectionError as err:
            if err.code is not ErrorCode.NO_PEAK:
                raise
            per_t.append(None)
    found = [t for t in per_t if t is not None]
    if len(found) < 3:
        raise InspectionError(
            ErrorCode.NOT_PERIODIC, f"only {len(found)} sub-images produced a period"
        )
    t = int(np.median(np.asarray(found)))
    c = n // t
    if c < 2:
        raise InspectionError(ErrorCode.NOT_PERIODIC, f"period count C={c} < 2")
    confidence = float(np.mean([tk is not None and abs(tk - t) <= 2 for tk in per_t]))
    return PeriodEstimate(T=t, C=c, per_subimage_T=per_t, confidence=confidence)


def classify_periods(
    image: InspectionImage, estimate: PeriodEstimate, tau_dirty: float = 3.0
) -> PeriodEstimate:
    """Flag period bands whose deviation from the median band profile is high.

    The image is cut into C column bands of width T; a band is dirty when its
    deviation from the pixelwise-median profile exceeds tau_dirty times the
    median band deviation. The band score is a high quantile of the smoothed
    absolute deviation, so a defect covering a small fraction of the band is
    not diluted away.
    """
    from scipy import ndimage

    gray = image.gray()
    t, c = estimate.T, estimate.C
    bands = np.stack([gray[:, k * t : (k + 1) * t] for k in range(c)])
    profile = np.median(bands, axis=0)
    absdev = ndimage.uniform_filter(np.abs(bands - profile[None]), size=(1, 3, 3))
    deviations = np.percentile(absdev, 99.9, axis=(1, 2))
    threshold = tau_dirty * float(np.median(deviations))
    dirty = [k for k in range(c) if deviations[k] > threshold]
    clean = [k for k in range(c) if k not in dirty]
    if not clean:
        raise InspectionError(ErrorCode.ALL_DIRTY, "no clean period band available")
    estimate.dirty_intervals = [(k * t, (k + 1) * t) for k in dirty]
    estimate.clean_offset = int(min(clean, key=lambda k: deviations[k]) * t)
    return estimate


def estimate_period(
    image: InspectionImage,
    cfg: ProjectionConfig = ProjectionConfig(),
    bounds: tuple[int, int] | None = None,
    peak_cfg: PeakConfig = PeakConfig(),
    tau_dirty: float = 3.0,
) -> PeriodEstimate:
    """Full periodicity stage: projections, median period, band classification."""
    estimate = estimate_image_period(project_horizontal(image, cfg), bounds, peak_cfg)
    return classify_periods(image, estimate, tau_dirty)
