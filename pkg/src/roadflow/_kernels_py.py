"""Pure NumPy implementation of the hot horizon-rollout kernel.

Used when the compiled extension is unavailable or explicitly disabled
via ROADFLOW_KERNEL=pure.
"""
from __future__ import annotations

import numpy as np


def rollout_cost(A: np.ndarray, x: np.ndarray, g_plan: np.ndarray,
                 n_roads: int) -> float:
    """Sum of squared road densities over the predicted horizon.

    Rolls x forward through x <- A x + g for each row of ``g_plan`` and
    accumulates the squared norm of the first ``n_roads`` entries (the
    exit accumulator is excluded from the cost).
    """
    x = np.array(x, dtype=float)
    total = 0.0
    for g in g_plan:
        x = A @ x + g
        head = x[:n_roads]
        total += float(head @ head)
    return total
