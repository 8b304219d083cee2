"""Primal active-set solver for small dense convex quadratic programs.

Solves  min 0.5 x'Hx + f'x  s.t.  A_eq x = b_eq,  G x <= h  with H
positive definite (callers regularize).  The solver is deterministic:
ties in constraint selection are broken by lowest row index.  The
starting point must satisfy all constraints; callers that cannot supply
one wrap the problem with an elastic slack variable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class QpInfeasibleError(RuntimeError):
    def __init__(self, message: str, violated: list[str] | None = None):
        super().__init__(message)
        self.violated = violated or []


class QpConvergenceError(RuntimeError):
    def __init__(self, message: str, residuals: dict | None = None):
        super().__init__(message)
        self.residuals = residuals or {}


@dataclass
class QpResult:
    x: np.ndarray
    objective: float
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    iterations: int


@dataclass
class KktResiduals:
    stationarity: float
    primal_eq: float
    primal_ineq: float
    dual: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal_eq, self.primal_ineq,
                   self.dual, self.complementarity)


def kkt_residuals(H, f, A_eq, b_eq, G, h, x, eq_mult, ineq_mult) -> KktResiduals:
    """Residuals of the KKT conditions at (x, multipliers)."""
    grad = H @ x + f
    if A_eq.size:
        grad = grad + A_eq.T @ eq_mult
    if G.size:
        grad = grad + G.T @ ineq_mult
    slack = G @ x - h if G.size else np.zeros(0)
    return KktResiduals(
        stationarity=float(np.max(np.abs(grad))) if grad.size else 0.0,
        primal_eq=float(np.max(np.abs(A_eq @ x - b_eq))) if A_eq.size else 0.0,
        primal_ineq=float(max(0.0, np.max(slack))) if slack.size else 0.0,
        dual=float(max(0.0, -np.min(ineq_mult))) if ineq_mult.size else 0.0,
        complementarity=(float(np.max(np.abs(ineq_mult * slack)))
                         if slack.size else 0.0),
    )


def _solve_kkt(H, A_act, rhs):
    n = H.shape[0]
    m = A_act.shape[0]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = H
    if m:
        kkt[:n, n:] = A_act.T
        kkt[n:, :n] = A_act
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def solve_qp(
    H: np.ndarray,
    f: np.ndarray,
    A_eq: np.ndarray,
    b_eq: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    x0: np.ndarray,
    max_iter: int | None = None,
    tol: float = 1e-10,
) -> QpResult:
    """Active-set iteration from the feasible point ``x0``."""
    H = np.asarray(H, dtype=float)
    f = np.asarray(f, dtype=float)
    A_eq = np.asarray(A_eq, dtype=float).reshape(-1, H.shape[0])
    b_eq = np.asarray(b_eq, dtype=float).ravel()
    G = np.asarray(G, dtype=float).reshape(-1, H.shape[0])
    h = np.asarray(h, dtype=float).ravel()
    x = np.asarray(x0, dtype=float).copy()

    n_eq = A_eq.shape[0]
    n_in = G.shape[0]
    feas_tol = 1e-8
    if n_eq and np.max(np.abs(A_eq @ x - b_eq)) > feas_tol:
        raise QpInfeasibleError("starting point violates equality constraints")
    if n_in and np.max(G @ x - h) > feas_tol:
        raise QpInfeasibleError("starting point violates inequality constraints")

    if max_iter is None:
        max_iter = 50 + 10 * (H.shape[0] + n_eq + n_in)

    active: list[int] = []
    stalled = 0
    for _it in range(max_iter):
        rows = [A_eq] if n_eq else []
        if active:
            rows.append(G[active])
        A_act = np.vstack(rows) if rows else np.zeros((0, H.shape[0]))
        rhs = np.concatenate([-(H @ x + f), np.zeros(A_act.shape[0])])
        p, mult = _solve_kkt(H, A_act, rhs)

        # a residual step direction that no longer reduces the objective is
        # numerical noise from an ill-conditioned KKT system: treat as zero
        if np.max(np.abs(p), initial=0.0) <= tol or stalled >= 2:
            ineq_mult = np.zeros(n_in)
            act_mult = mult[n_eq:]
            for idx, lam in zip(active, act_mult):
                ineq_mult[idx] = lam
            if not active or np.min(act_mult) >= -tol:
                eq_mult = mult[:n_eq]
                obj = float(0.5 * x @ H @ x + f @ x)
                return QpResult(x=x, objective=obj, eq_multipliers=eq_mult,
                                ineq_multipliers=np.maximum(ineq_mult, 0.0),
                                iterations=_it + 1)
            # Bland's rule: drop the lowest-index negative multiplier so
            # degenerate problems cannot cycle
            drop = int(np.nonzero(act_mult < -tol)[0][0])
            active.pop(drop)
            stalled = 0
            continue

        # step length to the nearest blocking inactive constraint
        alpha = 1.0
        blocking = -1
        if n_in:
            inactive = [i for i in range(n_in) if i not in active]
            for i in inactive:
                gp = float(G[i] @ p)
                if gp > tol:
                    a_i = float(h[i] - G[i] @ x) / gp
                    if a_i < alpha - 1e-14:
                        alpha = max(a_i, 0.0)
                        blocking = i
        obj_before = float(0.5 * x @ H @ x + f @ x)
        x = x + alpha * p
        if blocking >= 0:
            active.append(blocking)
            active.sort()
            stalled = 0
        else:
            obj_after = float(0.5 * x @ H @ x + f @ x)
            if obj_after > obj_before - 1e-14 * (1.0 + abs(obj_before)):
                stalled += 1
            else:
                stalled = 0

    res = kkt_residuals(H, f, A_eq, b_eq, G, h, x,
                        np.zeros(n_eq), np.zeros(n_in))
    raise QpConvergenceError(
        f"active-set iteration cap {max_iter} reached",
        residuals={"stationarity": res.stationarity,
                   "primal_eq": res.primal_eq,
                   "primal_ineq": res.primal_ineq},
    )
