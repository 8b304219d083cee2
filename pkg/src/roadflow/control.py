"""Horizon cost, boundary-inflow MPC, and receding-horizon phase selection.

Both controllers minimize the same horizon cost (sum of squared road
densities over the prediction window, exit accumulator excluded).  The
inflow controller solves a convex QP over the stacked inlet commands;
the phase selector searches the admissible assignments allowed by the
junction rotation cycles and activation timers.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import kernels, qp
from .dynamics import OperatorCache, TransitionOperator, _as_matrix
from .network import ControlConfig, NoirGraph, PhaseAssignment


# ---------------------------------------------------------------------------
# Horizon cost
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostOperator:
    """Quadratic form over (x_1, g_1, ..., g_n) equal to the rollout cost."""

    F: np.ndarray
    W: np.ndarray
    n_tau: int

    def cost(self, x: np.ndarray, g_plan: np.ndarray) -> float:
        z = np.concatenate([np.asarray(x, float).ravel(),
                            np.asarray(g_plan, float).ravel()])
        if z.shape[0] != self.W.shape[0]:
            raise ValueError(
                f"stacked vector has length {z.shape[0]}, expected "
                f"{self.W.shape[0]}")
        return float(z @ self.W @ z)


def cost_operator(op, n_tau: int) -> CostOperator:
    """Assemble F and W for a fixed transition operator.

    W is built from the stacked prediction maps x_{h+1} = M_h z with
    z = [x_1; g_1; ...; g_n], so the quadratic form matches the rollout
    sum by construction and is symmetric PSD.
    """
    if n_tau < 1:
        raise ValueError(f"n_tau must be >= 1, got {n_tau}")
    A = _as_matrix(op)
    size = A.shape[0]
    n_roads = size - 1
    F = np.eye(size)
    F[n_roads, n_roads] = 0.0

    powers = [np.eye(size)]
    for _ in range(n_tau):
        powers.append(A @ powers[-1])

    z_dim = (n_tau + 1) * size
    W = np.zeros((z_dim, z_dim))
    for h in range(1, n_tau + 1):
        m_h = np.zeros((n_roads, z_dim))  # road rows only; exit row is zero
        m_h[:, :size] = powers[h][:n_roads, :]
        for t in range(1, h + 1):
            m_h[:, t * size:(t + 1) * size] = powers[h - t][:n_roads, :]
        W += m_h.T @ m_h
    return CostOperator(F=F, W=W, n_tau=n_tau)


def evaluate_cost(x: np.ndarray, g_plan: np.ndarray, op,
                  n_tau: int | None = None) -> float:
    """Horizon cost by forward rollout under a fixed phase assignment."""
    A = _as_matrix(op)
    x = np.ascontiguousarray(x, dtype=float)
    g_plan = np.ascontiguousarray(g_plan, dtype=float)
    if g_plan.ndim != 2 or g_plan.shape[1] != A.shape[0]:
        raise ValueError(
            f"g_plan must be (n_tau, {A.shape[0]}), got {g_plan.shape}")
    if x.shape != (A.shape[0],):
        raise ValueError(f"x must have length {A.shape[0]}, got {x.shape}")
    if n_tau is not None and n_tau != g_plan.shape[0]:
        raise ValueError(
            f"n_tau={n_tau} does not match g_plan with {g_plan.shape[0]} steps")
    return kernels.rollout_cost(A, x, g_plan, A.shape[0] - 1)


# ---------------------------------------------------------------------------
# Boundary-inflow MPC
# ---------------------------------------------------------------------------

@dataclass
class InflowPlan:
    """Solution of the boundary-inflow QP."""

    u_plan: np.ndarray          # (n_tau, n_inlets), first row is applied
    objective: float
    relaxed: bool               # budget equality relaxed to an upper bound
    kkt: qp.KktResiduals
    iterations: int

    @property
    def u(self) -> np.ndarray:
        return self.u_plan[0]


def _prediction_system(A: np.ndarray, x: np.ndarray, d_base: np.ndarray,
                       n_inlets: int, n_tau: int):
    """Stacked road-density prediction: rho_stack = c + J u_stack."""
    size = A.shape[0]
    n_roads = size - 1
    powers = [np.eye(size)]
    for _ in range(n_tau):
        powers.append(A @ powers[-1])
    b_blocks = [powers[s][:n_roads, :n_inlets] for s in range(n_tau)]

    # input-free prediction: free_h = A^h x + sum_{t<=h} A^(h-t) d
    c = np.zeros(n_tau * n_roads)
    free = np.asarray(x, dtype=float)
    for h in range(1, n_tau + 1):
        free = A @ free + d_base
        c[(h - 1) * n_roads:h * n_roads] = free[:n_roads]

    J = np.zeros((n_tau * n_roads, n_tau * n_inlets))
    for h in range(1, n_tau + 1):
        for t in range(1, h + 1):
            J[(h - 1) * n_roads:h * n_roads,
              (t - 1) * n_inlets:t * n_inlets] = b_blocks[h - t]
    return c, J


def _budget_rows(n_inlets: int, n_tau: int) -> np.ndarray:
    rows = np.zeros((n_tau, n_tau * n_inlets))
    for t in range(n_tau):
        rows[t, t * n_inlets:(t + 1) * n_inlets] = 1.0
    return rows


def _feasible_start(warm: np.ndarray | None, n_inlets: int, n_tau: int,
                    u0: float, u_max: float) -> np.ndarray:
    """Point satisfying the per-step budget equality and the box bounds."""
    uniform = np.full(n_tau * n_inlets, u0 / n_inlets)
    if warm is None:
        return uniform
    plan = np.clip(np.asarray(warm, dtype=float).reshape(n_tau, n_inlets),
                   0.0, u_max)
    for t in range(n_tau):
        row = plan[t]
        for _ in range(8):
            delta = u0 - row.sum()
            if abs(delta) <= 1e-12:
                break
            adjustable = (row < u_max - 1e-12) if delta > 0 else (row > 1e-12)
            if not adjustable.any():
                break
            row[adjustable] += delta / adjustable.sum()
            np.clip(row, 0.0, u_max, out=row)
        if abs(row.sum() - u0) > 1e-9:
            return uniform
    return plan.ravel()


def _phase1(A_eq, b_eq, G, h, start):
    """Minimize the worst constraint violation with an elastic slack."""
    n = G.shape[1]
    h_el = np.zeros((n + 1, n + 1))
    h_el[:n, :n] = 1e-8 * np.eye(n)
    h_el[n, n] = 2.0
    f_el = np.zeros(n + 1)
    a_eq_el = np.hstack([A_eq, np.zeros((A_eq.shape[0], 1))]) if A_eq.size \
        else np.zeros((0, n + 1))
    g_el = np.vstack([
        np.hstack([G, -np.ones((G.shape[0], 1))]),
        np.concatenate([np.zeros(n), [-1.0]])[None, :],
    ])
    h_rhs = np.concatenate([h, [0.0]])
    e0 = max(0.0, float(np.max(G @ start - h, initial=0.0)))
    v0 = np.concatenate([start, [e0]])
    res = qp.solve_qp(h_el, f_el, a_eq_el, b_eq, g_el, h_rhs, v0)
    return res.x[:n], float(res.x[n])


def solve_boundary_inflow(
    x: np.ndarray,
    op,
    d_forecast,
    cfg: ControlConfig,
    graph: NoirGraph,
    warm_start: np.ndarray | None = None,
) -> InflowPlan:
    """Optimal inlet inflow plan over the horizon under a fixed assignment.

    Minimizes the horizon cost subject to the per-step budget
    (sum of inlet commands equals u0), box bounds on each command, and
    predicted per-road density caps.  If the budget equality makes the
    problem infeasible it is relaxed to an upper bound and the plan is
    flagged as relaxed; if even the relaxed problem is infeasible a
    :class:`roadflow.qp.QpInfeasibleError` is raised naming the violated
    density constraints.
    """
    A = _as_matrix(op)
    size = A.shape[0]
    n_roads = size - 1
    n_inlets = graph.n_inlets
    n_tau = cfg.horizon
    if np.asarray(x).shape != (size,):
        raise ValueError(f"x must have length {size}")
    if cfg.u0 > n_inlets * cfg.u_max + 1e-12:
        raise ValueError(
            f"budget u0={cfg.u0} exceeds n_inlets * u_max = "
            f"{n_inlets * cfg.u_max}")

    d_base = np.zeros(size)
    d_forecast = np.asarray(d_forecast, dtype=float)
    if d_forecast.ndim == 0:
        d_base[n_inlets:n_roads] = float(d_forecast)
    else:
        if d_forecast.shape != (n_roads - n_inlets,):
            raise ValueError(
                f"d_forecast must be scalar or length {n_roads - n_inlets}")
        d_base[n_inlets:n_roads] = d_forecast

    c, J = _prediction_system(A, x, d_base, n_inlets, n_tau)
    cap = cfg.rho_max - cfg.rho_margin
    rhs_density = cap - c

    # rows the inflow cannot influence are constants: check and drop
    influence = np.abs(J).max(axis=1)
    fixed = influence < 1e-12
    if fixed.any():
        violated = [
            f"predicted density of road {(i % n_roads) + 1} at horizon step "
            f"{i // n_roads + 1} is {c[i]:.6f} > cap {cap:.6f} "
            f"(not influenced by boundary inflow)"
            for i in np.nonzero(fixed & (c > cap + 1e-9))[0]
        ]
        if violated:
            raise qp.QpInfeasibleError(
                "density cap unreachable by boundary control", violated)
    keep = ~fixed
    J_c = J[keep]
    rhs_c = rhs_density[keep]

    nu = n_tau * n_inlets
    reg = 1e-10
    H = 2.0 * (J.T @ J) + 2.0 * reg * np.eye(nu)
    f = 2.0 * (J.T @ c)

    budget = _budget_rows(n_inlets, n_tau)
    bounds_G = np.vstack([np.eye(nu), -np.eye(nu)])
    bounds_h = np.concatenate([np.full(nu, cfg.u_max), np.zeros(nu)])
    G = np.vstack([J_c, bounds_G])
    h_vec = np.concatenate([rhs_c, bounds_h])

    b_eq = np.full(n_tau, cfg.u0)
    start = _feasible_start(warm_start, n_inlets, n_tau, cfg.u0, cfg.u_max)

    def attempt(a_eq, b, g_mat, h_rhs, start_pt):
        if g_mat.size and np.max(g_mat @ start_pt - h_rhs) > 1e-9:
            start_pt, worst = _phase1(a_eq, b, g_mat, h_rhs, start_pt)
            if worst > 1e-8:
                slack = g_mat @ start_pt - h_rhs
                violated = [
                    _describe_row(i, J_c.shape[0], n_roads, n_inlets, keep,
                                  slack[i])
                    for i in np.nonzero(slack > 1e-8)[0]
                ]
                raise qp.QpInfeasibleError(
                    "inflow constraint set infeasible", violated)
        return qp.solve_qp(H, f, a_eq, b, g_mat, h_rhs, start_pt)

    relaxed = False
    try:
        result = attempt(budget, b_eq, G, h_vec, start)
        g_used, h_used, eq_used, beq_used = G, h_vec, budget, b_eq
    except qp.QpInfeasibleError:
        # budget equality relaxed to an upper bound (per-step sum <= u0)
        relaxed = True
        g_relaxed = np.vstack([G, budget])
        h_relaxed = np.concatenate([h_vec, b_eq])
        zero_start = np.zeros(nu)
        result = attempt(np.zeros((0, nu)), np.zeros(0), g_relaxed, h_relaxed,
                         zero_start)
        g_used, h_used = g_relaxed, h_relaxed
        eq_used, beq_used = np.zeros((0, nu)), np.zeros(0)

    u = result.x
    residuals = qp.kkt_residuals(H, f, eq_used, beq_used, g_used, h_used, u,
                                 result.eq_multipliers,
                                 result.ineq_multipliers)
    objective = float(np.sum((c + J @ u) ** 2))
    return InflowPlan(
        u_plan=u.reshape(n_tau, n_inlets),
        objective=objective,
        relaxed=relaxed,
        kkt=residuals,
        iterations=result.iterations,
    )


def _describe_row(i, n_density_rows, n_roads, n_inlets, keep, amount):
    if i < n_density_rows:
        orig = np.nonzero(keep)[0][i]
        road = orig % n_roads + 1
        step = orig // n_roads + 1
        return (f"predicted density cap for road {road} at horizon step "
                f"{step} violated by {amount:.6f}")
    return f"box bound row {i - n_density_rows} violated by {amount:.6f}"


# ---------------------------------------------------------------------------
# Phase timers and admissible actions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseTimers:
    """Per-junction activation counters and rotation-forcing flags.

    ``T[j]`` counts the steps the current phase has stayed active beyond
    its starting step; ``tau[j]`` is 1 exactly when the counter reached
    the junction's maximum activation and the phase must rotate.
    """

    T: tuple[int, ...]
    tau: tuple[int, ...]

    @classmethod
    def initial(cls, graph: NoirGraph) -> "PhaseTimers":
        m = len(graph.junctions)
        return cls(T=(0,) * m, tau=(0,) * m)


def initial_assignment(graph: NoirGraph) -> PhaseAssignment:
    """Starting phase per junction, staggered so that junctions sharing a
    cycle length do not release toward the exit in lockstep."""
    return tuple(
        1 + idx % len(junction.phases)
        for idx, junction in enumerate(graph.junctions)
    )


def junction_candidates(
    current: PhaseAssignment,
    timers: PhaseTimers,
    graph: NoirGraph,
) -> list[list[int]]:
    """Admissible next phase indices per junction (hold listed first)."""
    candidates = []
    for pos, junction in enumerate(graph.junctions):
        cur = current[pos]
        if not 1 <= cur <= len(junction.phases):
            raise ValueError(
                f"junction {junction.id}: phase index {cur} out of range")
        succ = junction.successor_index(cur)
        if timers.tau[pos] == 1:
            candidates.append([succ])
        elif succ == cur:  # single-phase junction
            candidates.append([cur])
        else:
            candidates.append([cur, succ])
    return candidates


def admissible_actions(
    current: PhaseAssignment,
    timers: PhaseTimers,
    graph: NoirGraph,
):
    """All admissible network phase assignments (lazy Cartesian product)."""
    return itertools.product(*junction_candidates(current, timers, graph))


def update_timers(
    previous: PhaseAssignment,
    chosen: PhaseAssignment,
    timers: PhaseTimers,
    graph: NoirGraph,
) -> PhaseTimers:
    """Advance activation counters after a phase decision.

    A change resets the counter; holding increments it.  A forced
    rotation at a single-phase junction re-selects the same phase and is
    treated as a change.
    """
    candidates = junction_candidates(previous, timers, graph)
    new_T = []
    new_tau = []
    for pos, junction in enumerate(graph.junctions):
        if chosen[pos] not in candidates[pos]:
            raise ValueError(
                f"junction {junction.id}: phase {chosen[pos]} not admissible "
                f"from {previous[pos]} with tau={timers.tau[pos]}")
        if chosen[pos] != previous[pos] or timers.tau[pos] == 1:
            t = 0
        else:
            t = timers.T[pos] + 1
        new_T.append(t)
        new_tau.append(t // junction.max_activation)
    return PhaseTimers(T=tuple(new_T), tau=tuple(new_tau))


# ---------------------------------------------------------------------------
# Phase selection
# ---------------------------------------------------------------------------

def select_phase(
    x: np.ndarray,
    g_plan: np.ndarray,
    current: PhaseAssignment,
    timers: PhaseTimers,
    cache: OperatorCache,
    method: str = "auto",
) -> tuple[PhaseAssignment, float]:
    """Choose the admissible assignment minimizing the horizon cost.

    Small networks (<= 6 junctions) are searched exhaustively; larger
    ones use junction-wise coordinate descent iterated to a fixed point.
    Ties deterministically prefer holding the current phase, then the
    lowest successor index.
    """
    graph = cache.graph
    candidates = junction_candidates(current, timers, graph)
    x = np.ascontiguousarray(x, dtype=float)
    g_plan = np.ascontiguousarray(g_plan, dtype=float)
    n_roads = graph.n_roads

    memo: dict[PhaseAssignment, float] = {}

    def cost_of(assignment: PhaseAssignment) -> float:
        value = memo.get(assignment)
        if value is None:
            value = kernels.rollout_cost(cache.matrix(assignment), x, g_plan,
                                         n_roads)
            memo[assignment] = value
        return value

    if method == "auto":
        method = "exhaustive" if len(graph.junctions) <= 6 else "coordinate"
    if method == "exhaustive":
        best = None
        best_cost = np.inf
        for assignment in itertools.product(*candidates):
            value = cost_of(assignment)
            if value < best_cost:
                best, best_cost = assignment, value
        return best, float(best_cost)
    if method != "coordinate":
        raise ValueError(f"unknown search method {method!r}")

    working = [options[0] for options in candidates]
    best_cost = cost_of(tuple(working))
    for _sweep in range(max(1, len(graph.junctions))):
        changed = False
        for pos, options in enumerate(candidates):
            if len(options) == 1:
                continue
            best_option = working[pos]
            for option in options:
                if option == working[pos]:
                    continue
                trial = working.copy()
                trial[pos] = option
                value = cost_of(tuple(trial))
                if value < best_cost:
                    best_cost = value
                    best_option = option
            if best_option != working[pos]:
                working[pos] = best_option
                changed = True
        if not changed:
            break
    return tuple(working), float(best_cost)


@dataclass
class ControlDecision:
    """Combined per-step decision: applied inflow and next assignment."""

    u: np.ndarray
    u_plan: np.ndarray
    next_phase: PhaseAssignment
    objective: float
    relaxed: bool = False
