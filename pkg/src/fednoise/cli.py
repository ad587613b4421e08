"""Command-line interface: run experiments, verify properties, emit plots."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__


def _log_level() -> int:
    return getattr(logging, os.environ.get("FEDNOISE_LOG", "WARNING").upper(), logging.WARNING)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fednoise",
        description=(
            "Deterministic simulator and verification harness for federated "
            "training under noisy model exchange."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment described by a config file")
    p_run.add_argument("--config", required=True, help="YAML experiment config")
    p_run.add_argument("--out", default=None, help="output directory (overrides config)")

    p_verify = sub.add_parser("verify", help="run a named verification suite")
    p_verify.add_argument(
        "--suite",
        required=True,
        choices=("gradients", "equivalence", "bounds", "rates"),
        help="which property suite to run",
    )

    p_plot = sub.add_parser("plot", help="render a plot from a metrics CSV")
    p_plot.add_argument("--kind", required=True,
                        choices=("acc_vs_round", "loss_vs_round", "acc_vs_nodes", "loss_vs_nodes"))
    p_plot.add_argument("--in", dest="csv_in", required=True, help="metrics CSV path")
    p_plot.add_argument("--out", required=True, help="output file (.svg or .pdf)")

    sub.add_parser("config-reference", help="print the documented config keys")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=_log_level())
    args = build_parser().parse_args(argv)

    if args.command == "run":
        from .config import ConfigError, load_config
        from .experiment import run_experiment
        from .training import TrainingDiverged

        try:
            config = load_config(args.config)
        except (ConfigError, OSError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        if args.out:
            config.out_dir = args.out
        try:
            results = run_experiment(config)
        except TrainingDiverged as exc:
            print(f"training aborted: {exc}", file=sys.stderr)
            return 1
        print(f"wrote {len(results)} runs to {config.out_dir}")
        return 0

    if args.command == "verify":
        from .suites import run_suite

        results = run_suite(args.suite)
        for r in results:
            print(r.line())
        failed = [r for r in results if not r.passed]
        print(f"{len(results) - len(failed)}/{len(results)} checks passed")
        return 0 if not failed else 1

    if args.command == "plot":
        from .plots import emit_plot

        try:
            emit_plot(args.csv_in, args.kind, args.out)
        except (ValueError, OSError) as exc:
            print(f"plot error: {exc}", file=sys.stderr)
            return 1
        print(f"wrote {args.out}")
        return 0

    if args.command == "config-reference":
        from .config import config_reference

        print(config_reference())
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
