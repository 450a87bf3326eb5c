"""``csi`` command line: run campaigns, calibrate thresholds, list experiments."""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError
from .harness.config import DESCRIPTIONS, EXPERIMENTS, config_from_dict, load_config
from .harness.runner import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _common(p):
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--trials", type=int, help="trials per grid point (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes (overrides the config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csi", description="Adaptive CSI acquisition experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the campaign described by a JSON config file")
    run.add_argument("config", help="path to a JSON experiment config")
    _common(run)

    cal = sub.add_parser("calibrate", help="calibrate p_th and epsilon per SNR by Monte-Carlo")
    cal.add_argument("config", nargs="?", help="optional JSON config with experiment 'calibrate'")
    cal.add_argument("--snr-db", type=float, nargs="+", help="SNR grid in dB")
    cal.add_argument("--sparsity", type=int, nargs="+", help="sparsity levels S_a to mix over")
    cal.add_argument("--overhead", type=int, nargs="+", help="overheads G to mix over")
    cal.add_argument("--M", type=int, help="antenna count")
    cal.add_argument("--P", type=int, help="pilot subcarrier count")
    _common(cal)

    sub.add_parser("list-experiments", help="list the available experiment tags")
    return parser


def _overrides(args) -> dict:
    return {"seed": args.seed, "trials": args.trials, "out": args.out, "workers": args.workers}


def _calibration_config(args):
    if args.config:
        cfg = load_config(args.config)
        if cfg.experiment != "calibrate":
            raise ConfigError([f"experiment: expected 'calibrate', got {cfg.experiment!r}"])
        raw = cfg.to_dict()
    else:
        raw = {"experiment": "calibrate"}
    extra = {"snr_db": args.snr_db, "S_a": args.sparsity, "G": args.overhead, "M": args.M, "P": args.P}
    raw.update({k: v for k, v in extra.items() if v is not None})
    raw.update({k: v for k, v in _overrides(args).items() if v is not None})
    return config_from_dict(raw)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "list-experiments":
        for tag in EXPERIMENTS:
            print(f"{tag:15s} {DESCRIPTIONS[tag]}")
        return EXIT_OK
    try:
        if args.command == "run":
            cfg = load_config(args.config).with_overrides(**_overrides(args))
        else:
            cfg = _calibration_config(args)
    except ConfigError as exc:
        print(f"config error:\n  " + "\n  ".join(exc.problems), file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_experiment(cfg)
    except Exception as exc:  # reported, not raised: the exit code is the contract
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({"experiment": cfg.experiment, "out": cfg.out, "rows": len(result.rows)}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
