"""Closed-loop simulation: sense, select phase, solve the inflow QP,
apply, and advance the density state; plus trajectory logging and
summary metrics.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import control, dynamics, qp
from .network import PhaseAssignment, Scenario, validate

#: Wall-clock seconds per discrete step; metadata only, used to convert
#: step counts to seconds in reports.
DT_SECONDS = 30.0

#: Steady-state detector: relative change of the net density below this
#: threshold for this many consecutive steps.
STEADY_THRESHOLD = 0.02
STEADY_WINDOW = 5


class SimulationAbort(RuntimeError):
    """Raised when the inflow QP is infeasible even after relaxation."""

    def __init__(self, step: int, state: np.ndarray, cause: Exception):
        super().__init__(f"simulation aborted at step {step}: {cause}")
        self.step = step
        self.state = state
        self.cause = cause


@dataclass
class TrajectoryRecord:
    k: int
    densities: np.ndarray       # length N+1, post-step
    inflows: np.ndarray         # length N_in, applied command
    disturbances: np.ndarray    # length N - N_in
    phase_assignment: PhaseAssignment
    timers: tuple[int, ...]
    objective: float
    qp_relaxed: bool


@dataclass
class SummaryMetrics:
    net_density: np.ndarray
    steady_state_step: int | None
    peak_density: float


def run(scenario: Scenario) -> list[TrajectoryRecord]:
    """Execute the closed loop for ``scenario.steps`` iterations.

    Fully deterministic given the scenario seed.  Raises
    :class:`SimulationAbort` if the inflow QP is infeasible even after
    relaxing the budget equality.
    """
    report = validate(scenario)
    if not report.ok:
        raise ValueError(
            "scenario fails validation:\n  " + "\n  ".join(report.violations))

    graph = scenario.graph
    cfg = scenario.control
    size = graph.n_roads + 1
    n_inlets = graph.n_inlets
    n_internal = graph.n_roads - n_inlets
    cache = dynamics.OperatorCache(graph, scenario.turn_ratios,
                                   scenario.outflow_probs)
    d_mean = dynamics.disturbance_mean(scenario.disturbance)

    x = np.zeros(size)
    assignment = control.initial_assignment(graph)
    timers = control.PhaseTimers.initial(graph)
    prev_plan: np.ndarray | None = None

    records: list[TrajectoryRecord] = []
    for k in range(1, scenario.steps + 1):
        rng = dynamics.step_rng(scenario.seed, k)
        d = dynamics.sample_disturbance(scenario.disturbance, rng, n_internal)

        # phase selection uses the previous inflow plan (shifted one step,
        # last entry repeated) and the certainty-equivalent disturbance
        g_plan = np.zeros((cfg.horizon, size))
        g_plan[:, n_inlets:graph.n_roads] = d_mean
        if prev_plan is None:
            g_plan[:, :n_inlets] = cfg.u0 / n_inlets
        else:
            shifted = np.vstack([prev_plan[1:], prev_plan[-1:]])
            g_plan[:, :n_inlets] = shifted
        chosen, _phase_cost = control.select_phase(x, g_plan, assignment,
                                                   timers, cache)
        timers = control.update_timers(assignment, chosen, timers, graph)
        op = cache.operator(chosen)

        warm = None
        if prev_plan is not None:
            warm = np.vstack([prev_plan[1:], prev_plan[-1:]])
        try:
            plan = control.solve_boundary_inflow(x, op, d_mean, cfg, graph,
                                                 warm_start=warm)
        except qp.QpInfeasibleError as exc:
            raise SimulationAbort(step=k, state=x.copy(), cause=exc) from exc

        g = np.zeros(size)
        g[:n_inlets] = plan.u
        g[n_inlets:graph.n_roads] = d
        x = dynamics.step(x, g, op)

        records.append(TrajectoryRecord(
            k=k,
            densities=x.copy(),
            inflows=plan.u.copy(),
            disturbances=d.copy(),
            phase_assignment=chosen,
            timers=timers.T,
            objective=plan.objective,
            qp_relaxed=plan.relaxed,
        ))
        assignment = chosen
        prev_plan = plan.u_plan
    return records


def metrics(records: list[TrajectoryRecord]) -> SummaryMetrics:
    """Net density series, steady-state detection, and peak road density."""
    if not records:
        raise ValueError("empty trajectory")
    n_roads = records[0].densities.shape[0] - 1
    r_net = np.array([rec.densities[:n_roads].sum() for rec in records])
    peak = float(max(rec.densities[:n_roads].max() for rec in records))

    rel = np.zeros(len(records))
    for i in range(1, len(records)):
        rel[i] = abs(r_net[i] - r_net[i - 1]) / max(r_net[i - 1], 1.0)
    steady: int | None = None
    for i in range(0, len(records) - STEADY_WINDOW + 1):
        if np.all(rel[i:i + STEADY_WINDOW] < STEADY_THRESHOLD):
            steady = records[i].k
            break
    return SummaryMetrics(net_density=r_net, steady_state_step=steady,
                          peak_density=peak)


# ---------------------------------------------------------------------------
# Output formats
# ---------------------------------------------------------------------------

def csv_header(n_roads: int, n_inlets: int, n_junctions: int) -> str:
    columns = ["k"]
    columns += [f"rho_{i}" for i in range(1, n_roads + 2)]
    columns += [f"u_{i}" for i in range(1, n_inlets + 1)]
    columns += [f"phase_{j}" for j in range(1, n_junctions + 1)]
    columns += ["objective", "qp_relaxed"]
    return ",".join(columns)


def trajectory_csv(records: list[TrajectoryRecord], scenario: Scenario) -> str:
    """Render the trajectory in the stable CSV contract (one row per step)."""
    graph = scenario.graph
    lines = [csv_header(graph.n_roads, graph.n_inlets, len(graph.junctions))]
    for rec in records:
        cells = [str(rec.k)]
        cells += [f"{v:.6f}" for v in rec.densities]
        cells += [f"{v:.6f}" for v in rec.inflows]
        cells += [str(p) for p in rec.phase_assignment]
        cells.append(f"{rec.objective:.6f}")
        cells.append("1" if rec.qp_relaxed else "0")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def summary_dict(records: list[TrajectoryRecord],
                 summary: SummaryMetrics) -> dict:
    steady = summary.steady_state_step
    return {
        "steps": len(records),
        "net_density_final": round(float(summary.net_density[-1]), 6),
        "peak_density": round(summary.peak_density, 6),
        "steady_state_step": steady,
        "steady_state_seconds": None if steady is None else steady * DT_SECONDS,
        "dt_seconds": DT_SECONDS,
        "relaxed_steps": [rec.k for rec in records if rec.qp_relaxed],
    }


def summary_json(records: list[TrajectoryRecord],
                 summary: SummaryMetrics) -> str:
    return json.dumps(summary_dict(records, summary), indent=2,
                      sort_keys=True) + "\n"
