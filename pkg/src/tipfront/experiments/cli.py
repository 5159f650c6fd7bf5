"""Command-line entry point: ``tipfront <verb> [--config PATH] [flags]``.

Exit codes: 0 success, 1 validation failure, 2 bad configuration.
"""
from __future__ import annotations

import argparse
import sys

from . import commands
from .config import ConfigError, ExperimentConfig, load_config

VERBS = ("sweep", "curve", "trajectories", "fluct", "validate")

# which config field --replicas overrides for each verb
REPLICA_FIELD = {
    "sweep": "n_runs",
    "curve": "n_runs",
    "trajectories": "trajectory_runs",
    "fluct": "fluct_runs",
    "validate": "martingale_runs",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tipfront", description=__doc__.splitlines()[0])
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", help="key = value config file (defaults if omitted)")
    p.add_argument("--seed", type=int, help="override base_seed")
    p.add_argument("--out-dir", help="override out_dir")
    p.add_argument("--replicas", type=int, help="override the replica count of the verb")
    p.add_argument("--parallelism", type=int, help="worker threads")
    p.add_argument("--full", action="store_true",
                   help="long schedule (t2 = 10000) instead of the desk-scale default")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = {"base_seed": args.seed, "out_dir": args.out_dir, "parallelism": args.parallelism}
    if args.replicas is not None:
        over[REPLICA_FIELD[args.verb]] = args.replicas
    if args.full:
        over["t2"] = 10000.0
    return cfg.with_overrides(**over)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.verb == "sweep":
        res = commands.cmd_sweep(cfg)
        print(f"{len(res.pairs)} pairs -> {res.csv_path}")
    elif args.verb == "curve":
        res = commands.cmd_curve(cfg)
        for c, e in zip(res.c_est, res.estimates):
            print(f"c_est={c:.3f} speed={e.lambda_hat:.4f} se={e.std_error:.4f}")
        print(f"-> {res.csv_path}")
    elif args.verb == "trajectories":
        res = commands.cmd_trajectories(cfg)
        print(f"{len(res.trajectories)} runs -> {res.csv_path}")
    elif args.verb == "fluct":
        res = commands.cmd_fluct(cfg)
        print(f"lambda_hat={res.speed.lambda_hat:.4f} se={res.speed.std_error:.4f}")
        for t, r in res.reports.items():
            print(f"t={t:g} std={r.residual_std:.3f} slope={r.log_tail_slope:.3f} "
                  f"deviation={res.deviation[t]:.4f}")
    else:
        res = commands.cmd_validate(cfg)
        for c in res.checks:
            status = "PASS" if c.passed else "FAIL"
            print(f"{status} {c.name} statistic={c.statistic:.6g} threshold={c.threshold:.6g}"
                  + (f" ({c.note})" if c.note else ""))
        return 0 if res.ok else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
