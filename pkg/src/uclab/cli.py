"""Command-line front end.

    uclab run --scenario <file> --out <dir> [--seeds s1,s2,...] [--jobs J]
    uclab check --suite <name|all>
    uclab capacity --channel <file> [--tol 1e-9]

Exit codes: 0 success, 1 invariant failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import capacity as cap
from . import channels as chan
from . import harness


def _cmd_run(args) -> int:
    scenario = harness.Scenario.from_json(args.scenario)
    if args.seeds:
        seeds = tuple(int(s) for s in args.seeds.split(","))
        scenario = replace(scenario, seeds=seeds)
    report = harness.run_experiment(scenario, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, f"{scenario.name}.csv")
    harness.report_csv(report, out_path)
    n_err = sum(1 for r in report.seed_results if r.error)
    rates = [r.rate for r in report.seed_results]
    print(f"{scenario.name}: {len(report.seed_results)} seeds, "
          f"rate min/mean {min(rates):.4f}/{sum(rates) / len(rates):.4f}, "
          f"{n_err} error seed(s); wrote {out_path}")
    failed = [c for c in report.checks if not c.passed]
    for c in report.checks:
        print(f"  check {c.name}: {'pass' if c.passed else 'FAIL'} ({c.detail})")
    return 1 if failed else 0


def _cmd_check(args) -> int:
    names = sorted(harness.CHECKS) if args.suite == "all" else [args.suite]
    failed = False
    for name in names:
        result = harness.run_check(name)
        print(f"{name}: {'pass' if result.passed else 'FAIL'} ({result.detail})")
        failed = failed or not result.passed
    return 1 if failed else 0


def _cmd_capacity(args) -> int:
    channel = chan.load_channel(args.channel)
    if not isinstance(channel, chan.DmcChannel):
        raise harness.ConfigError(
            "capacity computation needs a 'dmc' channel config")
    result = cap.blahut_arimoto(channel.matrix, tol=args.tol)
    prior = ", ".join(f"{p:.6g}" for p in result.prior)
    print(f"capacity {result.capacity:.9f} bits/use "
          f"(gap <= {result.gap_bound:.2g}, {result.iterations} iterations)")
    print(f"optimal prior [{prior}]")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="uclab",
        description="universal communication lab: runs, checks, capacity")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write CSV")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seeds", default=None,
                       help="comma-separated override of the seed list")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.set_defaults(func=_cmd_run)

    p_check = sub.add_parser("check", help="run lemma-check suites")
    p_check.add_argument("--suite", default="all")
    p_check.set_defaults(func=_cmd_check)

    p_cap = sub.add_parser("capacity", help="capacity of a DMC config")
    p_cap.add_argument("--channel", required=True)
    p_cap.add_argument("--tol", type=float, default=1e-9)
    p_cap.set_defaults(func=_cmd_capacity)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (chan.NotEnumerable, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
