"""Command-line scenario runner.

    chainbench run partition_pow_8 --out results/ --seed 9
    chainbench sweep peak_pbft_8x8 --axis rate --values 8,64,512 --out sweep/
    chainbench attack partition_poa_8 --out attack/
    chainbench list scenarios

Scenario arguments accept either a path to a JSON file or the name of a
bundled scenario. Exit code 2 signals a configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .contracts import CATALOG
from .scenario import (ScenarioError, load_scenario, run_attack, run_scenario,
                       run_sweep, SWEEP_AXES)
from .workloads import WorkloadError, workload_names


def bundled_scenarios() -> dict[str, Path]:
    base = resources.files("chainbench").joinpath("scenarios")
    return {p.name[:-5]: p for p in sorted(base.iterdir(), key=lambda p: p.name)
            if p.name.endswith(".json")}


def _resolve_scenario(ref: str) -> dict:
    path = Path(ref)
    if path.exists():
        return load_scenario(path)
    bundled = bundled_scenarios()
    if ref in bundled:
        return load_scenario(bundled[ref])
    raise ScenarioError(f"no scenario file or bundled scenario named {ref!r}")


def _print_summary(summary: dict, verbose: bool) -> None:
    if verbose:
        print(json.dumps(summary, sort_keys=True, indent=2))
        return
    keys = ("throughput", "latency_p50", "latency_p99", "fork_ratio",
            "blocks_total", "blocks_main", "unconfirmed",
            "q1_total_value", "q2_scan", "q2_versioned")
    parts = [f"{k}={summary[k]}" for k in keys if k in summary]
    print(f"[{summary.get('scenario', '?')}] " + "  ".join(parts))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="chainbench",
                                     description="Desk-scale private blockchain benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one scenario")
    p_run.add_argument("scenario")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--wall-clock", action="store_true")
    p_run.add_argument("--verbose", "-v", action="store_true")

    p_sweep = sub.add_parser("sweep", help="run a scenario across an axis")
    p_sweep.add_argument("scenario")
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values, e.g. 8,64,512")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--verbose", "-v", action="store_true")

    p_attack = sub.add_parser("attack", help="partition the network, report fork exposure")
    p_attack.add_argument("scenario")
    p_attack.add_argument("--start", type=float, default=None, help="partition start (s)")
    p_attack.add_argument("--duration", type=float, default=None, help="partition length (s)")
    p_attack.add_argument("--seed", type=int, default=None)
    p_attack.add_argument("--out", default=None)
    p_attack.add_argument("--verbose", "-v", action="store_true")

    p_list = sub.add_parser("list", aliases=["list-contracts"],
                            help="list contracts, workloads or scenarios")
    p_list.add_argument("what", nargs="?", default="contracts",
                        choices=["contracts", "workloads", "scenarios"])

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            raw = _resolve_scenario(args.scenario)
            summary = run_scenario(raw, out_dir=args.out, seed=args.seed,
                                   wall_clock=args.wall_clock)
            _print_summary(summary, args.verbose)
        elif args.command == "sweep":
            raw = _resolve_scenario(args.scenario)
            values = [json.loads(v) for v in args.values.split(",") if v]
            if not values:
                raise ScenarioError("sweep needs at least one value")
            for summary in run_sweep(raw, args.axis, values,
                                     out_dir=args.out, seed=args.seed):
                _print_summary(summary, args.verbose)
        elif args.command == "attack":
            raw = _resolve_scenario(args.scenario)
            report = run_attack(raw, out_dir=args.out, seed=args.seed,
                                start_s=args.start, duration_s=args.duration)
            if args.verbose:
                print(json.dumps(report, sort_keys=True, indent=2))
            else:
                print(f"[{report['scenario']}] blocks_total={report['blocks_total']}"
                      f"  blocks_main={report['blocks_main']}"
                      f"  delta_final={report['delta_final']}"
                      f"  fork_ratio={report['fork_ratio']:.3f}")
        else:  # list / list-contracts
            what = getattr(args, "what", "contracts")
            if what == "contracts":
                for name in sorted(CATALOG):
                    print(name)
            elif what == "workloads":
                for name in workload_names():
                    print(name)
            else:
                for name in bundled_scenarios():
                    print(name)
    except (ScenarioError, WorkloadError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
