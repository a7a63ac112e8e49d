"""Kernel backend selection.

The compiled extension is used when available; set PANELINSPECT_PURE=1 to
force the NumPy fallback. Both backends expose the same functions and agree
numerically (see tests/test_kernels.py).
"""
from __future__ import annotations

import os

from . import _reference

if os.environ.get("PANELINSPECT_PURE") == "1":
    _impl = _reference
    BACKEND = "numpy"
else:
    try:
        from . import _fastkern as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _reference
        BACKEND = "numpy"

samsf = _impl.samsf
zncc = _impl.zncc
zncc_many = _impl.zncc_many

__all__ = ["samsf", "zncc", "zncc_many", "BACKEND"]
