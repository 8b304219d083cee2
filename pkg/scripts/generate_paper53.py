#!/usr/bin/env python3
"""Generate the bundled 53-road reference scenario.

The published description of the reference network pins down: 53 real
roads, inlets 1..8, exit node 54 with in-neighbors 9..17, 13 signalized
junctions, and junction 10's incoming/outgoing roads and three movement
phases.  The remaining topology, turn ratios, and outflow probabilities
are authored here, checked against every structural invariant, and
frozen into src/roadflow/data/paper53.json.

Run from the repository root:  python scripts/generate_paper53.py
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import json  # noqa: E402

import numpy as np  # noqa: E402

from roadflow.network import parse_scenario, serialize_scenario, validate  # noqa: E402

N_ROADS = 53
N_INLETS = 8
EXIT = 54
EXIT_FEEDERS = range(9, 18)

# junction id -> (incoming roads, outgoing roads)
JUNCTIONS = {
    1: ([1, 45, 26], [18, 27, 9]),
    2: ([2, 18, 46], [19, 28, 10]),
    3: ([3, 19, 47], [20, 29, 11]),
    4: ([4, 20, 48], [21, 30, 12, 46]),
    5: ([5, 21, 49], [22, 31, 14]),
    6: ([6, 22, 51], [23, 32, 15]),
    7: ([7, 23, 52], [24, 37, 16]),
    8: ([8, 24, 53], [25, 38, 17]),
    9: ([25, 27, 28, 29], [33, 43, 51, 40]),
    10: ([33, 35, 50], [13, 34, 36]),
    11: ([30, 31, 32, 34], [35, 39, 44, 52, 26]),
    12: ([36, 37, 38, 39, 40], [41, 42, 47, 49]),
    13: ([41, 42, 43, 44], [45, 48, 50, 53]),
}

# junction 10's phases are fixed by the reference description
JUNCTION_10_PHASES = [
    (50, [34, 13, 36]),
    (35, [13, 36]),
    (33, [13, 34]),
]

MAX_ACTIVATION = 3

# roads produced deep in the network that return flow to the outer ring
RETURN_ROADS = {26, 45, 46, 47, 48, 49, 50, 51, 52, 53}


def build_phases(jid, incoming, outgoing):
    if jid == 10:
        return [[[src, dst] for dst in dsts] for src, dsts in JUNCTION_10_PHASES]
    # phase k holds every approach except the k-th: high green duty keeps
    # the queues short and the exit flow smooth
    srcs = sorted(incoming)
    return [
        [[src, dst] for src in srcs if src != blocked
         for dst in sorted(outgoing)]
        for blocked in srcs
    ]


def outflow_prob(road):
    if road <= N_INLETS:
        return 0.9
    if road in EXIT_FEEDERS:
        return 0.5
    return round(0.96 + 0.01 * (road % 2), 2)


def ratio_weight(src, dst):
    # bias flow toward the exit feeders and the return ring so interior
    # junctions stay uncongested while paths remain long enough for the
    # net density to settle smoothly
    if dst in EXIT_FEEDERS:
        return 2.0
    if dst in RETURN_ROADS:
        return 3.0
    return 1.0 + 0.1 * ((src + dst) % 3)


def main():
    edges = []
    junction_docs = []
    for jid, (incoming, outgoing) in sorted(JUNCTIONS.items()):
        phases = build_phases(jid, incoming, outgoing)
        for phase in phases:
            edges.extend(tuple(e) for e in phase)
        junction_docs.append({
            "id": jid,
            "incoming": sorted(incoming),
            "outgoing": sorted(outgoing),
            "phases": phases,
            "max_activation": MAX_ACTIVATION,
        })
    edges.extend((i, EXIT) for i in EXIT_FEEDERS)
    edges = sorted(set(edges))

    outs = {}
    for i, j in edges:
        outs.setdefault(i, []).append(j)
    weights = {(i, j): ratio_weight(i, j) for i, j in edges if j != EXIT}
    for i in EXIT_FEEDERS:
        weights[(i, EXIT)] = 1.0

    # The net density trace stays smooth only if the mass arriving at each
    # exit-feeder road does not depend on which signal phase happens to be
    # green.  Balance the feeder-edge weights so every approach of a
    # junction routes roughly the same flow into the junction's feeder,
    # using the analytic steady-state flow f = e + R^T f.
    feeder_edges = [(src, dst) for (src, dst) in weights
                    if dst in EXIT_FEEDERS]
    external = np.full(N_ROADS, 0.5)
    external[:N_INLETS] = 31.0 / N_INLETS
    external[8:17] = 0.0
    for _ in range(40):
        R = np.zeros((N_ROADS, N_ROADS))
        for road in sorted(outs):
            targets = sorted(outs[road])
            total = sum(weights[(road, t)] for t in targets)
            for dst in targets:
                if dst != EXIT:
                    R[road - 1, dst - 1] = weights[(road, dst)] / total
        flow = np.linalg.solve(np.eye(N_ROADS) - R.T, external)
        for dst in sorted({d for _, d in feeder_edges}):
            srcs = sorted(s for s, d in feeder_edges if d == dst)
            contrib = {}
            for s in srcs:
                total = sum(weights[(s, t)] for t in sorted(outs[s]))
                contrib[s] = flow[s - 1] * weights[(s, dst)] / total
            target = max(contrib.values())
            for s in srcs:
                scale = (target / max(contrib[s], 1e-9)) ** 0.5
                weights[(s, dst)] = min(20.0, max(0.2,
                                                  weights[(s, dst)] * scale))

    ratios = []
    for road in sorted(outs):
        targets = sorted(outs[road])
        total = sum(weights[(road, t)] for t in targets)
        for dst in targets:
            ratios.append({"from": road, "to": dst,
                           "ratio": round(weights[(road, dst)] / total, 6)})

    doc = {
        "roads": N_ROADS,
        "inlets": N_INLETS,
        "edges": [list(e) for e in edges],
        "junctions": junction_docs,
        "turn_ratios": ratios,
        "outflow_probs": [{"road": i, "p": outflow_prob(i)}
                          for i in range(1, N_ROADS + 1)],
        "control": {"horizon": 5, "u0": 31, "rho_max": 40, "u_max": 31,
                    "rho_margin": 0.5},
        "disturbance": {"kind": "uniform", "low": 0.0, "high": 1.0},
        "seed": 7,
        "steps": 100,
    }

    scenario = parse_scenario(json.dumps(doc))
    report = validate(scenario)
    if not report.ok:
        for violation in report.violations:
            print(f"VIOLATION: {violation}")
        raise SystemExit(1)
    print(f"structurally valid: {report.info}")
    print(f"edges: {len(edges)}")

    out = Path(__file__).resolve().parents[1] / "src/roadflow/data/paper53.json"
    out.write_text(serialize_scenario(scenario), encoding="utf-8")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
