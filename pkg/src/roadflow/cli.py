"""Command-line interface: scenario validation, closed-loop simulation,
and horizon-cost inspection.

Exit codes are a stable contract: 0 success, 1 validation or usage
failure, 2 I/O failure, 3 runtime abort (inflow QP infeasible even after
relaxation).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import control, dynamics, sim
from .network import ScenarioFormatError, Scenario, parse_scenario, validate

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_ABORT = 3


def _load_scenario(path: str) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    try:
        return parse_scenario(text)
    except ScenarioFormatError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _apply_overrides(scenario: Scenario, args: argparse.Namespace) -> Scenario:
    control_cfg = scenario.control
    if args.u0 is not None:
        # keep the per-inlet bound consistent when the budget is raised
        control_cfg = dataclasses.replace(
            control_cfg, u0=args.u0, u_max=max(control_cfg.u_max, args.u0))
    if args.horizon is not None:
        control_cfg = dataclasses.replace(control_cfg, horizon=args.horizon)
    replacements: dict = {"control": control_cfg}
    if args.seed is not None:
        replacements["seed"] = args.seed
    if args.steps is not None:
        replacements["steps"] = args.steps
    return dataclasses.replace(scenario, **replacements)


def cmd_validate(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args.scenario)
    report = validate(scenario)
    info = report.info
    print(f"roads={info['n_roads']} inlets={info['n_inlets']} "
          f"junctions={info['n_junctions']}")
    print(f"exit in-neighbors: {info['exit_in_neighbors']}")
    if report.ok:
        print("OK: all structural checks passed")
        return EXIT_OK
    print(f"{len(report.violations)} violation(s):")
    for violation in report.violations:
        print(f"  - {violation}")
    return EXIT_VALIDATION


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = _apply_overrides(_load_scenario(args.scenario), args)
    report = validate(scenario)
    if not report.ok:
        print(f"error: scenario fails validation "
              f"({len(report.violations)} violation(s)):", file=sys.stderr)
        for violation in report.violations:
            print(f"  - {violation}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        records = sim.run(scenario)
    except sim.SimulationAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT

    out_dir = Path(args.output)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "trajectory.csv").write_text(
            sim.trajectory_csv(records, scenario), encoding="utf-8")
        if records:
            summary = sim.metrics(records)
            (out_dir / "summary.json").write_text(
                sim.summary_json(records, summary), encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot write outputs to {out_dir}: {exc}",
              file=sys.stderr)
        return EXIT_IO

    if records:
        steady = summary.steady_state_step
        print(f"steps: {len(records)}")
        print("steady-state step: "
              + (str(steady) if steady is not None else "not reached"))
        print(f"peak density: {summary.peak_density:.6f}")
    else:
        print("steps: 0")
    print(f"wrote {out_dir / 'trajectory.csv'}")
    return EXIT_OK


def cmd_cost(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args.scenario)
    try:
        state_doc = json.loads(Path(args.state).read_text(encoding="utf-8"))
    except OSError as exc:
        print(f"error: cannot read {args.state}: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: {args.state}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        x = np.asarray(state_doc["x"], dtype=float)
        g_plan = np.asarray(state_doc["g_plan"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        print(f"error: state file needs 'x' and 'g_plan' arrays: {exc}",
              file=sys.stderr)
        return EXIT_VALIDATION

    graph = scenario.graph
    if args.phases:
        try:
            assignment = tuple(int(p) for p in args.phases.split(","))
        except ValueError:
            print(f"error: --phases must be comma-separated integers",
                  file=sys.stderr)
            return EXIT_VALIDATION
    else:
        assignment = control.initial_assignment(graph)

    try:
        cache = dynamics.OperatorCache(graph, scenario.turn_ratios,
                                       scenario.outflow_probs)
        op = cache.operator(assignment)
        rollout = control.evaluate_cost(x, g_plan, op)
        costop = control.cost_operator(op, g_plan.shape[0])
        w_form = costop.cost(x, g_plan)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    print(f"horizon cost (rollout): {rollout:.9f}")
    print(f"horizon cost (quadratic form): {w_form:.9f}")
    print(f"delta: {abs(rollout - w_form):.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadflow",
        description="Traffic network congestion control: validation, "
                    "closed-loop simulation, cost inspection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("scenario")
    p_val.set_defaults(func=cmd_validate)

    p_sim = sub.add_parser("simulate", help="run the closed loop")
    p_sim.add_argument("scenario")
    p_sim.add_argument("-o", "--output", default="out",
                       help="output directory (default: out)")
    p_sim.add_argument("--steps", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--u0", type=float, default=None)
    p_sim.add_argument("--horizon", type=int, default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_cost = sub.add_parser("cost", help="evaluate the horizon cost")
    p_cost.add_argument("scenario")
    p_cost.add_argument("--state", required=True,
                        help="JSON file with 'x' and 'g_plan'")
    p_cost.add_argument("--phases", default=None,
                        help="comma-separated phase index per junction")
    p_cost.set_defaults(func=cmd_cost)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
