#!/usr/bin/env python3
"""Run the four comparison experiments and render their figures.

Round-indexed experiments compare schemes at N=10 over 200 rounds; node-count
experiments sweep N in {5, 10, 20, 50}. Expect roughly 30-60 minutes total on
a laptop-class machine (the surrogate-scheme runs dominate). Results and SVG
figures land under results/.

Usage:
    python scripts/reproduce_figures.py [--only expectation_rounds ...]
"""
import argparse
import pathlib
import sys
import time

from fednoise.config import load_config
from fednoise.experiment import run_experiment
from fednoise.plots import emit_plot

CONFIG_DIR = pathlib.Path(__file__).parent / "configs"

EXPERIMENTS = {
    "expectation_rounds": ("acc_vs_round", "loss_vs_round"),
    "worstcase_rounds": ("acc_vs_round", "loss_vs_round"),
    "expectation_nodes": ("acc_vs_nodes", "loss_vs_nodes"),
    "worstcase_nodes": ("acc_vs_nodes", "loss_vs_nodes"),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--only", nargs="*", choices=sorted(EXPERIMENTS), default=None,
        help="subset of experiments to run",
    )
    args = parser.parse_args(argv)
    names = args.only or list(EXPERIMENTS)

    for name in names:
        config = load_config(CONFIG_DIR / f"{name}.yaml")
        print(f"== {name} ({len(config.schemes)} schemes x "
              f"{len(config.node_counts)} node counts x {len(config.seeds)} seeds)")
        started = time.perf_counter()
        run_experiment(config)
        print(f"   runs done in {time.perf_counter() - started:.0f}s")
        csv_path = pathlib.Path(config.out_dir) / "metrics.csv"
        fig_dir = pathlib.Path("results") / "figures"
        fig_dir.mkdir(parents=True, exist_ok=True)
        for kind in EXPERIMENTS[name]:
            out = fig_dir / f"{name}_{kind}.svg"
            emit_plot(csv_path, kind, out)
            print(f"   wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
