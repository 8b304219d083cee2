"""Kernel backend selection: compiled extension with pure-Python fallback.

The compiled module is optional; setting ROADFLOW_KERNEL=pure forces the
NumPy implementation, ROADFLOW_KERNEL=compiled requires the extension.
"""
from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def _select():
    choice = os.environ.get("ROADFLOW_KERNEL", "auto")
    if choice == "pure":
        return _kernels_py, "pure"
    if choice == "compiled":
        if _compiled is None:
            raise ImportError(
                "ROADFLOW_KERNEL=compiled but the extension is not built"
            )
        return _compiled, "compiled"
    if choice != "auto":
        raise ValueError(f"ROADFLOW_KERNEL must be auto, compiled or pure, "
                         f"got {choice!r}")
    if _compiled is not None:
        return _compiled, "compiled"
    return _kernels_py, "pure"


_backend, _backend_name = _select()


def backend_name() -> str:
    return _backend_name


def have_compiled() -> bool:
    return _compiled is not None


def rollout_cost(A, x, g_plan, n_roads) -> float:
    return _backend.rollout_cost(A, x, g_plan, n_roads)


def rollout_cost_pure(A, x, g_plan, n_roads) -> float:
    """Always use the NumPy implementation (for cross-checks/benchmarks)."""
    return _kernels_py.rollout_cost(A, x, g_plan, n_roads)


def rollout_cost_compiled(A, x, g_plan, n_roads) -> float:
    """Always use the compiled implementation; raises if not built."""
    if _compiled is None:
        raise ImportError("compiled kernel extension is not built")
    return _compiled.rollout_cost(A, x, g_plan, n_roads)
