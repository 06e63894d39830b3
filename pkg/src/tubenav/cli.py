"""Command-line interface.

Subcommands mirror the pipeline stages:

    tubenav plan <scenario.yaml> [--out DIR]
    tubenav simulate <scenario.yaml> [--out DIR] [--seeds N] [--dt S] ...
    tubenav verify <artifacts-dir>
    tubenav export <artifacts-dir> [--samples N]

Exit code 0 means success; `simulate` returns 0 only when every agent
satisfies reach-avoid-stay and stays collision-free for every seed.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import pipeline
from .errors import TubenavError
from .scenario import Scenario, load_scenario


def _load(path: str) -> Scenario:
    return load_scenario(Path(path))


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    neg = scenario.negotiation
    sim = scenario.simulation
    if getattr(args, "delta", None) is not None:
        neg = dataclasses.replace(neg, delta=args.delta)
    if getattr(args, "max_iter", None) is not None:
        neg = dataclasses.replace(neg, max_iter=args.max_iter)
    if getattr(args, "seed", None) is not None:
        sim = dataclasses.replace(sim, seed=args.seed)
    if getattr(args, "dt", None) is not None:
        sim = dataclasses.replace(sim, dt=args.dt)
    return dataclasses.replace(scenario, negotiation=neg, simulation=sim)


def cmd_plan(args) -> int:
    scenario = _apply_overrides(_load(args.scenario), args)
    out_dir = Path(args.out) if args.out else pipeline.default_out_dir()
    result = pipeline.plan(scenario, out_dir=out_dir)
    n_updates = len(result.log.updates())
    print(f"planned {len(result.tubes_post)} tube(s) for '{scenario.name}'")
    print(f"negotiation: {result.log.iterations} iteration(s), "
          f"{n_updates} tube update(s)")
    print(f"artifacts written to {out_dir}")
    return 0


def cmd_simulate(args) -> int:
    scenario = _apply_overrides(_load(args.scenario), args)
    out_dir = Path(args.out) if args.out else pipeline.default_out_dir()
    seeds = None
    if args.seeds is not None:
        base = scenario.simulation.seed
        seeds = list(range(base, base + args.seeds))
    result = pipeline.run(scenario, out_dir=out_dir, seeds=seeds, dt=args.dt)
    verdicts = result.fleet.verdicts
    n_runs = sum(len(v) for v in verdicts.values())
    n_ok = sum(1 for per_seed in verdicts.values()
               for v in per_seed.values() if v.satisfied)
    print(f"simulated '{scenario.name}': {n_ok}/{n_runs} agent runs satisfied")
    for seed, dist in result.fleet.min_distance.items():
        print(f"  seed {seed}: min pairwise distance {dist:.4f}, "
              f"funnel violations {result.fleet.violation_counts[seed]}")
    print(f"artifacts written to {out_dir}")
    return result.exit_code


def cmd_verify(args) -> int:
    artifacts = pipeline.RunArtifacts(Path(args.artifacts))
    report = pipeline.verify_artifacts(artifacts)
    print(json.dumps(report, indent=2))
    return 0 if report["ok"] else 1


def cmd_export(args) -> int:
    artifacts = pipeline.RunArtifacts(Path(args.artifacts))
    written = pipeline.export_plot_data(artifacts, samples=args.samples)
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tubenav",
        description="Prescribed-time multi-agent navigation via "
                    "time-varying tubes")
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="build and negotiate tubes")
    p_plan.add_argument("scenario", help="scenario YAML file")
    p_plan.add_argument("--out", help="artifact output directory")
    p_plan.add_argument("--delta", type=float,
                        help="freeze lead time before each conflict window")
    p_plan.add_argument("--max-iter", type=int, dest="max_iter",
                        help="negotiation pass budget")
    p_plan.set_defaults(func=cmd_plan)

    p_sim = sub.add_parser("simulate", help="plan, then run closed-loop "
                                            "simulations")
    p_sim.add_argument("scenario", help="scenario YAML file")
    p_sim.add_argument("--out", help="artifact output directory")
    p_sim.add_argument("--seeds", type=int,
                       help="number of consecutive disturbance seeds")
    p_sim.add_argument("--seed", type=int, help="base disturbance seed")
    p_sim.add_argument("--dt", type=float, help="integration step override")
    p_sim.add_argument("--delta", type=float,
                       help="freeze lead time before each conflict window")
    p_sim.add_argument("--max-iter", type=int, dest="max_iter",
                       help="negotiation pass budget")
    p_sim.set_defaults(func=cmd_simulate)

    p_ver = sub.add_parser("verify", help="re-check persisted tubes")
    p_ver.add_argument("artifacts", help="artifact directory from plan")
    p_ver.set_defaults(func=cmd_verify)

    p_exp = sub.add_parser("export", help="write plot-ready tables")
    p_exp.add_argument("artifacts", help="artifact directory from plan")
    p_exp.add_argument("--samples", type=int, default=1000,
                       help="samples per tube boundary")
    p_exp.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TubenavError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
