"""Transition operator assembly, stepping, horizon maps, disturbances."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadflow import dynamics
from roadflow.network import DisturbanceConfig, active_edges

from conftest import junction_chain_doc, make_scenario, two_phase_doc


def operator_for(scenario, assignment=None):
    graph = scenario.graph
    if assignment is None:
        assignment = tuple(1 for _ in graph.junctions)
    return dynamics.assemble(graph, assignment, scenario.turn_ratios,
                             scenario.outflow_probs)


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def test_chain_operator_matrix(chain):
    op = operator_for(chain)
    expected = np.array([
        [0.5, 0.0, 0.0],
        [0.5, 0.5, 0.0],
        [0.0, 0.5, 1.0],
    ])
    assert np.allclose(op.A, expected, atol=1e-15)
    assert np.allclose(op.C, expected[:2, :2])
    assert np.allclose(op.D, expected[2:, :2])


def test_chain_step(chain):
    op = operator_for(chain)
    x = np.array([4.0, 2.0, 0.0])
    g = np.array([1.0, 0.5, 0.0])
    x_next = dynamics.step(x, g, op)
    assert np.allclose(x_next, [3.0, 3.5, 1.0], atol=1e-12)
    assert abs(x_next.sum() - (x.sum() + g.sum())) < 1e-12


def test_blocked_road_is_a_unit_column(two_phase):
    # under phase 1 road 3 is red: zero outflow, density frozen
    op = operator_for(two_phase, (1,))
    assert np.array_equal(op.A[:, 2], np.array([0.0, 0.0, 1.0, 0.0, 0.0]))
    assert op.P[2, 2] == 0.0
    op2 = operator_for(two_phase, (2,))
    assert np.array_equal(op2.A[:, 1], np.array([0.0, 1.0, 0.0, 0.0, 0.0]))


def test_exit_column_is_absorbing(paper53):
    graph = paper53.graph
    op = operator_for(paper53)
    unit = np.zeros(graph.n_roads + 1)
    unit[-1] = 1.0
    assert np.array_equal(op.A[:, -1], unit)


def test_missing_probability_raises(chain):
    probs = dict(chain.outflow_probs)
    del probs[2]
    with pytest.raises(dynamics.DynamicsError, match="missing outflow"):
        dynamics.assemble(chain.graph, (), chain.turn_ratios, probs)


def test_probability_out_of_range_raises(chain):
    probs = dict(chain.outflow_probs)
    probs[1] = 1.5
    with pytest.raises(dynamics.DynamicsError, match="outside"):
        dynamics.assemble(chain.graph, (), chain.turn_ratios, probs)


def test_missing_ratio_raises(chain):
    ratios = dict(chain.turn_ratios)
    del ratios[(1, 2)]
    with pytest.raises(dynamics.DynamicsError, match="missing turn ratio"):
        dynamics.assemble(chain.graph, (), ratios, chain.outflow_probs)


def test_cache_matches_direct_assembly(paper53):
    graph = paper53.graph
    cache = dynamics.OperatorCache(graph, paper53.turn_ratios,
                                   paper53.outflow_probs)
    rng = np.random.default_rng(0)
    for _ in range(20):
        assignment = tuple(
            int(rng.integers(1, len(j.phases) + 1)) for j in graph.junctions)
        direct = dynamics.assemble(graph, assignment, paper53.turn_ratios,
                                   paper53.outflow_probs)
        assert np.array_equal(cache.matrix(assignment), direct.A)
        assert np.array_equal(cache.operator(assignment).A, direct.A)


# ---------------------------------------------------------------------------
# Stochasticity and stability
# ---------------------------------------------------------------------------

def test_columns_are_stochastic(paper53):
    graph = paper53.graph
    cache = dynamics.OperatorCache(graph, paper53.turn_ratios,
                                   paper53.outflow_probs)
    rng = np.random.default_rng(1)
    for _ in range(50):
        assignment = tuple(
            int(rng.integers(1, len(j.phases) + 1)) for j in graph.junctions)
        A = cache.matrix(assignment)
        assert np.max(np.abs(A.sum(axis=0) - 1.0)) < 1e-12
        assert A.min() >= 0.0


@settings(max_examples=50, deadline=None)
@given(
    probs=st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4),
    weights=st.lists(st.floats(0.05, 5.0), min_size=5, max_size=5),
)
def test_columns_stochastic_for_any_tables(probs, weights):
    doc = junction_chain_doc(1)
    scenario = make_scenario(doc)
    new_probs = {r: probs[r - 1] for r in range(1, 5)}
    edges = [(1, 2), (1, 3), (2, 4), (3, 4), (4, 5)]
    new_ratios = {e: w for e, w in zip(edges, weights)}
    for assignment in [(1,), (2,)]:
        A = dynamics.assemble(scenario.graph, assignment, new_ratios,
                              new_probs).A
        assert np.max(np.abs(A.sum(axis=0) - 1.0)) < 1e-12
        assert A.min() >= 0.0


def _drains_fully(graph, assignment):
    active = active_edges(graph, assignment)
    outs = {}
    for i, j in active:
        outs.setdefault(i, set()).add(j)
    reached = {graph.exit_id}
    changed = True
    while changed:
        changed = False
        for road in range(1, graph.n_roads + 1):
            if road not in reached and outs.get(road, set()) & reached:
                reached.add(road)
                changed = True
    return len(reached) == graph.n_roads + 1


def test_spectral_radius_dichotomy(chain, two_phase, paper53):
    # fully draining network: strictly contracting road block
    op = operator_for(chain)
    assert np.max(np.abs(np.linalg.eigvals(op.C))) < 1.0
    # a red approach freezes its density: eigenvalue 1 on the road block
    for scenario in (two_phase, paper53):
        graph = scenario.graph
        assignment = tuple(1 for _ in graph.junctions)
        assert not _drains_fully(graph, assignment)
        op = operator_for(scenario, assignment)
        radius = np.max(np.abs(np.linalg.eigvals(op.C)))
        assert radius >= 1.0 - 1e-12


@settings(max_examples=30, deadline=None)
@given(
    x=st.lists(st.floats(0.0, 50.0), min_size=5, max_size=5),
    g=st.lists(st.floats(0.0, 5.0), min_size=4, max_size=4),
    phase=st.sampled_from([1, 2]),
)
def test_step_preserves_mass_and_sign(x, g, phase):
    op = operator_for(make_scenario(two_phase_doc()), (phase,))
    x = np.array(x)
    g_full = np.array(g + [0.0])
    x_next = dynamics.step(x, g_full, op)
    assert abs(x_next.sum() - (x.sum() + g_full.sum())) < 1e-9
    assert x_next.min() >= 0.0


# ---------------------------------------------------------------------------
# Horizon maps
# ---------------------------------------------------------------------------

def test_horizon_single_step(chain):
    op = operator_for(chain)
    ops = dynamics.horizon(op, 1)
    assert len(ops.thetas) == 1
    assert np.allclose(ops.thetas[0], op.A)
    assert np.allclose(ops.gamma, np.eye(3))


def test_horizon_matches_rollout(paper53):
    op = operator_for(paper53)
    size = paper53.graph.n_roads + 1
    rng = np.random.default_rng(2)
    x = rng.uniform(0, 5, size)
    for n_tau in range(1, 11):
        g_plan = rng.uniform(0, 1, (n_tau, size))
        ops = dynamics.horizon(op, n_tau)
        predicted = dynamics.predict(op, x, g_plan)
        state = x.copy()
        for h in range(n_tau):
            state = op.A @ state + g_plan[h]
        assert np.max(np.abs(predicted - state)) < 1e-9
        closed = ops.thetas[-1] @ x + ops.gamma @ g_plan.ravel()
        assert np.max(np.abs(closed - state)) < 1e-9
        # powers of a column-stochastic matrix stay column-stochastic
        for theta in ops.thetas:
            assert np.max(np.abs(theta.sum(axis=0) - 1.0)) < 1e-10


# ---------------------------------------------------------------------------
# Disturbance sampling
# ---------------------------------------------------------------------------

def test_uniform_disturbance_mean():
    config = DisturbanceConfig(kind="uniform", low=0.0, high=1.0)
    rng = dynamics.step_rng(0, 1)
    samples = dynamics.sample_disturbance(config, rng, 100_000)
    assert abs(samples.mean() - 0.5) < 0.01
    assert samples.min() >= 0.0 and samples.max() <= 1.0
    assert dynamics.disturbance_mean(config) == 0.5


def test_degenerate_uniform_disturbance():
    config = DisturbanceConfig(kind="uniform", low=0.3, high=0.3)
    samples = dynamics.sample_disturbance(config, dynamics.step_rng(0, 1), 100)
    assert np.all(samples == 0.3)


def test_disturbance_stream_is_deterministic():
    config = DisturbanceConfig(kind="uniform", low=0.0, high=1.0)
    a = dynamics.sample_disturbance(config, dynamics.step_rng(42, 7), 45)
    b = dynamics.sample_disturbance(config, dynamics.step_rng(42, 7), 45)
    c = dynamics.sample_disturbance(config, dynamics.step_rng(42, 8), 45)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_gaussian_mean_clamped_at_zero():
    config = DisturbanceConfig(kind="gaussian-truncated", mean=-1.0, std=0.5)
    assert dynamics.disturbance_mean(config) == 0.0
    samples = dynamics.sample_disturbance(config, dynamics.step_rng(0, 1), 1000)
    assert samples.min() >= 0.0
