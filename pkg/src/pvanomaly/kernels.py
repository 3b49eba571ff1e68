"""Kernel backend selection.

The compiled extension is used when importable; set
``PVANOMALY_PURE_PYTHON=1`` to force the numpy fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("PVANOMALY_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

smo_one_class = _impl.smo_one_class
forest_apply = _impl.forest_apply
min_norm_point = _impl.min_norm_point

__all__ = ["BACKEND", "smo_one_class", "forest_apply", "min_norm_point"]
