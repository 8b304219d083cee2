"""Congestion control for a network of interconnected roads.

Markov density dynamics on a directed road graph, MPC-based boundary
inflow assignment, receding-horizon traffic-signal phase selection, and
a deterministic closed-loop simulator.
"""

from .network import (
    ControlConfig,
    DisturbanceConfig,
    Junction,
    MovementPhase,
    NoirGraph,
    Scenario,
    ScenarioFormatError,
    ValidationReport,
    active_edges,
    parse_scenario,
    serialize_scenario,
    validate,
)
from .dynamics import (
    HorizonOperators,
    OperatorCache,
    TransitionOperator,
    assemble,
    disturbance_mean,
    horizon,
    sample_disturbance,
    step,
    step_rng,
)
from .control import (
    ControlDecision,
    CostOperator,
    InflowPlan,
    PhaseTimers,
    admissible_actions,
    cost_operator,
    evaluate_cost,
    junction_candidates,
    select_phase,
    solve_boundary_inflow,
    update_timers,
)
from .sim import SimulationAbort, SummaryMetrics, TrajectoryRecord, metrics, run

__version__ = "0.1.0"
