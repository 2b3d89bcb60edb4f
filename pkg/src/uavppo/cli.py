"""Command-line entry point: ``uavppo run|compare|scenario|eval``."""
from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from . import harness
from .env import load_yaml


def parse_overrides(tokens: List[str]) -> dict:
    """Turn ``--key value`` pairs into a dict; values are parsed as YAML scalars/lists."""
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ValueError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ValueError(f"missing value for --{key}")
            val = tokens[i + 1]
            i += 2
        out[key.replace("-", "_")] = load_yaml(val)
    return out


def _seeds(text: str) -> List[int]:
    return [int(s) for s in text.split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uavppo", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train one algorithm over a seed list",
                       epilog="Any config key can be overridden with --key value, e.g. --episodes 200. "
                              f"Config names are looked up on ${harness.CONFIG_PATH_ENV} then the cwd.")
    r.add_argument("--preset", default=None, help=f"one of: {', '.join(harness.PRESETS)}")
    r.add_argument("--algo", default=None, help=f"one of: {', '.join(harness.ALGOS)}")
    r.add_argument("--seeds", type=_seeds, default=None, help="comma-separated, e.g. 1,2,3")
    r.add_argument("--out", default="runs", help="output directory")
    r.add_argument("--config", default=None, help="YAML/JSON config file or name (manifests work too)")
    r.add_argument("--quiet", action="store_true")

    c = sub.add_parser("compare", help="summarize and align finished runs")
    c.add_argument("runs", nargs="+", help="run directories (searched recursively)")
    c.add_argument("--out", default="comparison", help="where summary.csv and series.csv go")
    c.add_argument("--final-window", type=int, default=harness.FINAL_WINDOW)

    s = sub.add_parser("scenario", help="write a seeded MDC placement")
    s.add_argument("--n", type=int, default=5, help="number of MDCs")
    s.add_argument("--m", type=int, default=3, help="number of channels")
    s.add_argument("--L", type=float, default=200.0, dest="area", help="side of the square area (m)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="scenario.yaml")

    e = sub.add_parser("eval", help="greedy rollout from a run checkpoint")
    e.add_argument("run", help="a seed directory containing manifest.json and checkpoints")
    e.add_argument("--out", default="trace.csv")
    e.add_argument("--seed", type=int, default=0, help="seed of the evaluation episode")
    return p


def _cmd_run(args, extra: List[str]) -> int:
    cfg = harness.load_config_file(args.config) if args.config else {"overrides": {}}
    overrides = {**cfg["overrides"], **parse_overrides(extra)}
    spec = harness.build_spec(
        preset=args.preset or cfg.get("preset", "fig-time-50M"),
        algo=args.algo or cfg.get("algo", "ppo-ppo"),
        seeds=args.seeds or cfg.get("seeds", [0]),
        out_dir=args.out,
        overrides=overrides,
    )

    def progress(seed, row):
        if not args.quiet and (row["episode"] % 100 == 0 or row["episode"] == spec.train.episodes):
            print(f"seed {seed} episode {row['episode']}/{spec.train.episodes} "
                  f"mission_time {row['mission_time']} success {row['success']}", flush=True)

    dirs = harness.run_experiment(spec, progress)
    for d in dirs:
        print(d / "metrics.csv")
    return 0


def _cmd_compare(args) -> int:
    cmp = harness.compare(args.runs, final_window=args.final_window)
    for note in cmp.notes:
        print(f"note: {note}", file=sys.stderr)
    summary_path, series_path = harness.write_comparison(cmp, args.out)
    print(f"{'algorithm':<18}{'runs':>5}{'episodes':>10}{'final_mean':>12}{'final_var':>12}{'timeouts':>10}")
    for s in cmp.summary:
        print(f"{s['algorithm']:<18}{s['runs']:>5}{s['episodes']:>10}{s['final_mean']:>12.2f}"
              f"{s['final_var']:>12.2f}{s['timeout_rate']:>10.3f}")
    print(summary_path)
    print(series_path)
    return 0


def _cmd_scenario(args) -> int:
    cfg = harness.make_scenario(args.n, args.m, args.area, args.seed, args.out)
    print(f"{args.out}: {cfg.n_mdcs} MDCs in [0, {cfg.area_m:g}]^2")
    return 0


def _cmd_eval(args) -> int:
    res = harness.evaluate_run(args.run, args.out, seed=args.seed)
    print(f"mission_time {res['mission_time']} success {int(res['success'])} -> {args.out}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if extra and args.command != "run":
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    try:
        if args.command == "run":
            return _cmd_run(args, extra)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "scenario":
            return _cmd_scenario(args)
        return _cmd_eval(args)
    except KeyError as e:
        print(f"error: {e.args[0]}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
