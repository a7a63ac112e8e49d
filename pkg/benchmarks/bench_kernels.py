"""Compare the compiled kernel backend against the pure-numpy fallback.

Run: python benchmarks/bench_kernels.py
"""
from __future__ import annotations

import time

import numpy as np

from panelinspect.kernels import BACKEND, _reference

try:
    from panelinspect.kernels import _fastkern
except ImportError:
    _fastkern = None


def _time(fn, *args, repeats: int = 5) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    rng = np.random.default_rng(0)
    print(f"active backend: {BACKEND}")
    if _fastkern is None:
        print("compiled backend unavailable; timing numpy fallback only")

    curve = rng.normal(0, 30, 1024)
    image = rng.integers(0, 255, (768, 1024)).astype(np.float64)
    patch = image[100:324, 100:324].copy()
    xs = np.arange(0, 1024 - 224, 16)
    ys = np.full_like(xs, 200)

    cases = [
        ("samsf (N=1024)", (curve,), "samsf"),
        ("zncc pair (224x224)", (patch, image[200:424, 300:524].copy()), "zncc"),
        (f"zncc_many ({len(xs)} placements)", (image, patch, xs, ys), "zncc_many"),
    ]
    header = f"{'kernel':<28}{'numpy (ms)':>12}"
    if _fastkern is not None:
        header += f"{'compiled (ms)':>15}{'speedup':>9}"
    print(header)
    for name, args, attr in cases:
        t_np = _time(getattr(_reference, attr), *args) * 1000
        line = f"{name:<28}{t_np:>12.3f}"
        if _fastkern is not None:
            t_c = _time(getattr(_fastkern, attr), *args) * 1000
            line += f"{t_c:>15.3f}{t_np / max(t_c, 1e-9):>9.1f}x"
            ref = getattr(_reference, attr)(*args)
            fast = getattr(_fastkern, attr)(*args)
            assert np.allclose(ref, fast, atol=1e-6), f"{name}: backend mismatch"
        print(line)


if __name__ == "__main__":
    main()
