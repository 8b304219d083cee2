"""Shared fixtures: small hand-built networks with known behaviour."""
from __future__ import annotations

import json

import pytest

from roadflow import data
from roadflow.network import Scenario, parse_scenario


def make_scenario(doc: dict) -> Scenario:
    return parse_scenario(json.dumps(doc))


def chain_doc() -> dict:
    """Two-road chain: inlet 1 -> road 2 -> exit 3, both p = 0.5."""
    return {
        "roads": 2,
        "inlets": 1,
        "edges": [[1, 2], [2, 3]],
        "junctions": [],
        "turn_ratios": [
            {"from": 1, "to": 2, "ratio": 1.0},
            {"from": 2, "to": 3, "ratio": 1.0},
        ],
        "outflow_probs": [{"road": 1, "p": 0.5}, {"road": 2, "p": 0.5}],
        "control": {"horizon": 1, "u0": 5, "rho_max": 100, "u_max": 5},
        "disturbance": {"kind": "uniform", "low": 0.0, "high": 1.0},
        "seed": 1,
        "steps": 10,
    }


def three_inlet_doc() -> dict:
    """Three inlets merging into one internal road that feeds the exit."""
    return {
        "roads": 4,
        "inlets": 3,
        "edges": [[1, 4], [2, 4], [3, 4], [4, 5]],
        "junctions": [],
        "turn_ratios": [
            {"from": 1, "to": 4, "ratio": 1.0},
            {"from": 2, "to": 4, "ratio": 1.0},
            {"from": 3, "to": 4, "ratio": 1.0},
            {"from": 4, "to": 5, "ratio": 1.0},
        ],
        "outflow_probs": [
            {"road": 1, "p": 0.6},
            {"road": 2, "p": 0.5},
            {"road": 3, "p": 0.4},
            {"road": 4, "p": 0.7},
        ],
        "control": {"horizon": 2, "u0": 1.0, "rho_max": 100, "u_max": 1.0},
        "disturbance": {"kind": "uniform", "low": 0.0, "high": 1.0},
        "seed": 3,
        "steps": 10,
    }


def two_phase_doc() -> dict:
    """One junction with two single-movement phases.

    Inlet 1 feeds roads 2 and 3; the junction releases either road 2 or
    road 3 toward road 4, which drains to the exit.
    """
    return {
        "roads": 4,
        "inlets": 1,
        "edges": [[1, 2], [1, 3], [2, 4], [3, 4], [4, 5]],
        "junctions": [
            {
                "id": 1,
                "incoming": [2, 3],
                "outgoing": [4],
                "phases": [[[2, 4]], [[3, 4]]],
                "max_activation": 3,
            }
        ],
        "turn_ratios": [
            {"from": 1, "to": 2, "ratio": 0.5},
            {"from": 1, "to": 3, "ratio": 0.5},
            {"from": 2, "to": 4, "ratio": 1.0},
            {"from": 3, "to": 4, "ratio": 1.0},
            {"from": 4, "to": 5, "ratio": 1.0},
        ],
        "outflow_probs": [{"road": r, "p": 0.8} for r in range(1, 5)],
        "control": {"horizon": 2, "u0": 1.0, "rho_max": 100, "u_max": 1.0},
        "disturbance": {"kind": "uniform", "low": 0.0, "high": 1.0},
        "seed": 5,
        "steps": 10,
    }


def three_phase_doc() -> dict:
    """One junction rotating through three single-movement phases."""
    return {
        "roads": 5,
        "inlets": 1,
        "edges": [[1, 2], [1, 3], [1, 4], [2, 5], [3, 5], [4, 5], [5, 6]],
        "junctions": [
            {
                "id": 1,
                "incoming": [2, 3, 4],
                "outgoing": [5],
                "phases": [[[2, 5]], [[3, 5]], [[4, 5]]],
                "max_activation": 3,
            }
        ],
        "turn_ratios": [
            {"from": 1, "to": 2, "ratio": 0.4},
            {"from": 1, "to": 3, "ratio": 0.3},
            {"from": 1, "to": 4, "ratio": 0.3},
            {"from": 2, "to": 5, "ratio": 1.0},
            {"from": 3, "to": 5, "ratio": 1.0},
            {"from": 4, "to": 5, "ratio": 1.0},
            {"from": 5, "to": 6, "ratio": 1.0},
        ],
        "outflow_probs": [{"road": r, "p": 0.8} for r in range(1, 6)],
        "control": {"horizon": 2, "u0": 1.0, "rho_max": 100, "u_max": 1.0},
        "disturbance": {"kind": "uniform", "low": 0.0, "high": 1.0},
        "seed": 5,
        "steps": 10,
    }


def junction_chain_doc(m: int) -> dict:
    """Chain of ``m`` two-phase junctions between one inlet and the exit.

    Inlet 1 splits into roads 2 and 3.  Junction j gates roads 2j and
    2j+1 and releases one of them toward roads 2j+2 and 2j+3; the last
    junction releases into road 2m+2, which drains to the exit.
    """
    if m < 1:
        raise ValueError("need at least one junction")
    n_roads = 2 * m + 2
    last = 2 * m + 2
    edges = [[1, 2], [1, 3]]
    junctions = []
    ratios = [
        {"from": 1, "to": 2, "ratio": 0.55},
        {"from": 1, "to": 3, "ratio": 0.45},
    ]
    for j in range(1, m):
        a, b = 2 * j, 2 * j + 1
        out_a, out_b = 2 * j + 2, 2 * j + 3
        phase_a = [[a, out_a], [a, out_b]]
        phase_b = [[b, out_a], [b, out_b]]
        edges += phase_a + phase_b
        junctions.append({
            "id": j,
            "incoming": [a, b],
            "outgoing": [out_a, out_b],
            "phases": [phase_a, phase_b],
            "max_activation": 3,
        })
        ratios += [
            {"from": a, "to": out_a, "ratio": 0.6},
            {"from": a, "to": out_b, "ratio": 0.4},
            {"from": b, "to": out_a, "ratio": 0.5},
            {"from": b, "to": out_b, "ratio": 0.5},
        ]
    a, b = 2 * m, 2 * m + 1
    edges += [[a, last], [b, last], [last, n_roads + 1]]
    junctions.append({
        "id": m,
        "incoming": [a, b],
        "outgoing": [last],
        "phases": [[[a, last]], [[b, last]]],
        "max_activation": 3,
    })
    ratios += [
        {"from": a, "to": last, "ratio": 1.0},
        {"from": b, "to": last, "ratio": 1.0},
        {"from": last, "to": n_roads + 1, "ratio": 1.0},
    ]
    return {
        "roads": n_roads,
        "inlets": 1,
        "edges": edges,
        "junctions": junctions,
        "turn_ratios": ratios,
        "outflow_probs": [
            {"road": r, "p": 0.7 + 0.02 * (r % 5)} for r in range(1, n_roads + 1)
        ],
        "control": {"horizon": 3, "u0": 2.0, "rho_max": 1000, "u_max": 2.0},
        "disturbance": {"kind": "uniform", "low": 0.0, "high": 1.0},
        "seed": 11,
        "steps": 20,
    }


@pytest.fixture(scope="session")
def paper53() -> Scenario:
    return parse_scenario(data.scenario_text("paper53"))


@pytest.fixture()
def chain() -> Scenario:
    return make_scenario(chain_doc())


@pytest.fixture()
def three_inlet() -> Scenario:
    return make_scenario(three_inlet_doc())


@pytest.fixture()
def two_phase() -> Scenario:
    return make_scenario(two_phase_doc())


@pytest.fixture()
def three_phase() -> Scenario:
    return make_scenario(three_phase_doc())
