"""Backend selection for the distance/kernel hot loops.

The compiled extension is used when available; set F3I_PURE_PYTHON=1 to force
the NumPy fallback. Both backends implement the same contract and are compared
in benchmarks/bench_kernels.py and in the test suite.
"""
from __future__ import annotations

import os

import numpy as np

if os.environ.get("F3I_PURE_PYTHON"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _impl

BACKEND: str = _impl.BACKEND


def _c(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def sq_dists(A, B) -> np.ndarray:
    return _impl.sq_dists(_c(A), _c(B))


def kernel_stats(A, B, inv_scale: float):
    return _impl.kernel_stats(_c(A), _c(B), float(inv_scale))
