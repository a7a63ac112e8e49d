"""Pure NumPy implementations of the hot kernels.

These are the fallback backend and the behavioural reference for the
compiled extension; both must agree to tight tolerance (see tests).
"""
from __future__ import annotations

import numpy as np

# Lags processed per chunk; bounds peak memory at ~chunk*N float64.
_SAMSF_CHUNK = 256


def samsf(curve: np.ndarray) -> np.ndarray:
    """Lag-domain magnitude-sum curve of a 1-D signal with modular wrap.

    The input is zero-meaned over its own samples first; the result has one
    value per lag p in [0, N) and is symmetric: out[p] == out[N - p].
    """
    p_curve = np.asarray(curve, dtype=np.float64)
    n = p_curve.size
    p_curve = p_curve - p_curve.mean()
    out = np.empty(n, dtype=np.float64)
    idx = np.arange(n)
    for start in range(0, n, _SAMSF_CHUNK):
        lags = np.arange(start, min(start + _SAMSF_CHUNK, n))
        shifted = p_curve[(idx[None, :] + lags[:, None]) % n]
        out[lags] = np.abs(shifted + p_curve[None, :]).sum(axis=1)
    return out


def zncc(a: np.ndarray, b: np.ndarray) -> float:
    """Zero-normalized cross-correlation of two equal-shape patches in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0.0:
        return 0.0
    return float((a * b).sum() / denom)


def zncc_many(
    image: np.ndarray, patch: np.ndarray, xs: np.ndarray, ys: np.ndarray
) -> np.ndarray:
    """ZNCC of `patch` against `image` at each top-left placement (xs[i], ys[i])."""
    patch = np.asarray(patch, dtype=np.float64)
    ph, pw = patch.shape
    pz = patch - patch.mean()
    p_norm = np.sqrt((pz * pz).sum())
    out = np.empty(len(xs), dtype=np.float64)
    for i, (x, y) in enumerate(zip(xs, ys)):
        window = np.asarray(image[y : y + ph, x : x + pw], dtype=np.float64)
        wz = window - window.mean()
        denom = p_norm * np.sqrt((wz * wz).sum())
        out[i] = (pz * wz).sum() / denom if denom != 0.0 else 0.0
    return out
