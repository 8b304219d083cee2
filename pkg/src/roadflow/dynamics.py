"""Phase-dependent transition operator and density propagation.

The network state is a length N+1 vector of vehicle counts: per-road
densities followed by a cumulative exit accumulator.  For a phase
assignment the update is x(k+1) = A x(k) + g(k) with A = I - P + Q P,
where P holds per-road outflow probabilities (zeroed for roads whose
downstream edges are all red) and Q holds turn ratios renormalized over
the active out-neighbors.  A is column-stochastic by construction, which
gives the mass ledger sum(x+) = sum(x) + sum(g).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Edge, NoirGraph, PhaseAssignment, active_edges


class DynamicsError(ValueError):
    """Raised for inconsistent transition-operator inputs."""


@dataclass(frozen=True)
class TransitionOperator:
    """Matrices P, Q, A = I - P + QP and the blocks of A = [[C, 0], [D, 1]]."""

    P: np.ndarray
    Q: np.ndarray
    A: np.ndarray

    @property
    def C(self) -> np.ndarray:
        n = self.A.shape[0] - 1
        return self.A[:n, :n]

    @property
    def D(self) -> np.ndarray:
        n = self.A.shape[0] - 1
        return self.A[n:, :n]

    @property
    def size(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class HorizonOperators:
    """Powers of A and the stacked-input prediction matrix.

    ``thetas[h-1]`` is A**h; ``gamma`` is the block row
    [A**(n-1) ... A I] mapping stacked inputs g_1..g_n to their
    contribution to x_{n+1}.
    """

    thetas: tuple[np.ndarray, ...]
    gamma: np.ndarray


def _as_matrix(op) -> np.ndarray:
    if isinstance(op, TransitionOperator):
        return op.A
    return np.asarray(op, dtype=float)


def _column_data(
    road: int,
    active_outs: list[int],
    base_ratios,
    base_probs,
    size: int,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Outflow probability and the Q/A columns for one road.

    A road with no active out-neighbors is blocked: its outflow
    probability is forced to 0 and its A column is the unit vector.
    """
    try:
        p = float(base_probs[road])
    except KeyError:
        raise DynamicsError(f"road {road}: missing outflow probability") from None
    if not 0.0 <= p <= 1.0:
        raise DynamicsError(f"road {road}: outflow probability {p} outside [0, 1]")

    q_col = np.zeros(size)
    a_col = np.zeros(size)
    a_col[road - 1] = 1.0
    if not active_outs:
        return 0.0, q_col, a_col

    weights = []
    for dst in active_outs:
        try:
            ratio = float(base_ratios[(road, dst)])
        except KeyError:
            raise DynamicsError(
                f"edge ({road}, {dst}): missing turn ratio"
            ) from None
        if ratio < 0:
            raise DynamicsError(f"edge ({road}, {dst}): negative turn ratio {ratio}")
        weights.append(ratio)
    total = sum(weights)
    if total <= 0.0:
        raise DynamicsError(
            f"road {road}: turn ratios over active out-neighbors "
            f"{active_outs} sum to zero"
        )
    for dst, w in zip(active_outs, weights):
        q_col[dst - 1] = w / total
    a_col[road - 1] = 1.0 - p
    a_col += p * q_col
    return p, q_col, a_col


def assemble(
    graph: NoirGraph,
    assignment: PhaseAssignment,
    base_ratios,
    base_probs,
) -> TransitionOperator:
    """Build the transition operator for one phase assignment."""
    size = graph.n_roads + 1
    edges = active_edges(graph, assignment)
    outs: dict[int, list[int]] = {i: [] for i in range(1, size)}
    for i, j in sorted(edges):
        outs[i].append(j)

    P = np.zeros((size, size))
    Q = np.zeros((size, size))
    A = np.zeros((size, size))
    for road in range(1, size):
        p, q_col, a_col = _column_data(road, outs[road], base_ratios,
                                       base_probs, size)
        P[road - 1, road - 1] = p
        Q[:, road - 1] = q_col
        A[:, road - 1] = a_col
    # exit column: zero outflow, self-loop ratio 1
    Q[size - 1, size - 1] = 1.0
    A[size - 1, size - 1] = 1.0
    return TransitionOperator(P=P, Q=Q, A=A)


class OperatorCache:
    """Fast transition-operator assembly for a fixed network.

    Per-road column data depends only on the phase of the road's own
    junction, so columns are precomputed once per (junction, phase) and
    stitched together per assignment.  Results match :func:`assemble`
    exactly.
    """

    def __init__(self, graph: NoirGraph, base_ratios, base_probs):
        self.graph = graph
        self.size = graph.n_roads + 1
        size = self.size

        # Baseline: uncontrolled roads flow along their always-active
        # edges; governed roads default to blocked (unit column).
        always_outs: dict[int, list[int]] = {i: [] for i in range(1, size)}
        for i, j in sorted(graph.always_active_edges):
            always_outs[i].append(j)
        self._a_base = np.zeros((size, size))
        self._q_base = np.zeros((size, size))
        self._p_base = np.zeros(size)
        for road in range(1, size):
            outs = always_outs[road] if road not in graph.governed_roads else []
            p, q_col, a_col = _column_data(road, outs, base_ratios,
                                           base_probs, size)
            self._p_base[road - 1] = p
            self._q_base[:, road - 1] = q_col
            self._a_base[:, road - 1] = a_col
        self._q_base[size - 1, size - 1] = 1.0
        self._a_base[size - 1, size - 1] = 1.0

        # (junction position, phase index) -> list of column overrides
        self._phase_columns: list[list[list[tuple[int, float, np.ndarray, np.ndarray]]]] = []
        for junction in graph.junctions:
            per_phase = []
            for phase in junction.phases:
                sources: dict[int, list[int]] = {}
                for i, j in sorted(phase.active_edges):
                    sources.setdefault(i, []).append(j)
                columns = []
                for road in sorted(sources):
                    p, q_col, a_col = _column_data(
                        road, sources[road], base_ratios, base_probs, size)
                    columns.append((road - 1, p, q_col, a_col))
                per_phase.append(columns)
            self._phase_columns.append(per_phase)

    def matrix(self, assignment: PhaseAssignment) -> np.ndarray:
        """Transition matrix A for the assignment (hot path)."""
        A = self._a_base.copy()
        for pos, index in enumerate(assignment):
            for col, _p, _q, a_col in self._phase_columns[pos][index - 1]:
                A[:, col] = a_col
        return A

    def operator(self, assignment: PhaseAssignment) -> TransitionOperator:
        A = self._a_base.copy()
        Q = self._q_base.copy()
        p_diag = self._p_base.copy()
        for pos, index in enumerate(assignment):
            for col, p, q_col, a_col in self._phase_columns[pos][index - 1]:
                A[:, col] = a_col
                Q[:, col] = q_col
                p_diag[col] = p
        return TransitionOperator(P=np.diag(p_diag), Q=Q, A=A)


def step(x: np.ndarray, g: np.ndarray, op) -> np.ndarray:
    """Advance the density vector one step: x+ = A x + g."""
    A = _as_matrix(op)
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    if x.shape != (A.shape[0],) or g.shape != (A.shape[0],):
        raise DynamicsError(
            f"dimension mismatch: A is {A.shape}, x is {x.shape}, g is {g.shape}"
        )
    return A @ x + g


def horizon(op, n_tau: int) -> HorizonOperators:
    """Powers A**h for h = 1..n_tau and the stacked-input matrix."""
    if n_tau < 1:
        raise DynamicsError(f"n_tau must be >= 1, got {n_tau}")
    A = _as_matrix(op)
    size = A.shape[0]
    thetas = [A.copy()]
    for _ in range(n_tau - 1):
        thetas.append(A @ thetas[-1])
    blocks = [thetas[h - 1] for h in range(n_tau - 1, 0, -1)]
    blocks.append(np.eye(size))
    gamma = np.hstack(blocks)
    return HorizonOperators(thetas=tuple(thetas), gamma=gamma)


def predict(op, x: np.ndarray, g_plan: np.ndarray) -> np.ndarray:
    """Multi-step prediction x_{n+1} = A**n x + gamma [g_1; ...; g_n]."""
    g_plan = np.asarray(g_plan, dtype=float)
    n_tau = g_plan.shape[0]
    ops = horizon(op, n_tau)
    return ops.thetas[-1] @ np.asarray(x, dtype=float) + ops.gamma @ g_plan.ravel()


# ---------------------------------------------------------------------------
# Disturbance sampling
# ---------------------------------------------------------------------------

def step_rng(seed: int, k: int) -> np.random.Generator:
    """Deterministic per-step generator derived from the scenario seed."""
    return np.random.default_rng([seed, k])


def sample_disturbance(config, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw one disturbance vector for the internal roads."""
    if config.kind == "uniform":
        return rng.uniform(config.low, config.high, count)
    samples = rng.normal(config.mean, config.std, count)
    return np.clip(samples, 0.0, None)


def disturbance_mean(config) -> float:
    """Certainty-equivalent forecast value used by the controllers."""
    if config.kind == "uniform":
        return 0.5 * (config.low + config.high)
    return max(config.mean, 0.0)
