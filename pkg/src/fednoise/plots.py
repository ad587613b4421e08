"""Static plot emission from the metrics CSV.

One series per (scheme, node count): the mean over seeds, with a min/max
band when several seeds are present. SVG output is rendered with a fixed
hash salt and no embedded date so reruns produce identical bytes.
"""
from __future__ import annotations

import csv
from collections import defaultdict

import matplotlib
import numpy as np

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "fednoise"
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

PLOT_KINDS = ("acc_vs_round", "loss_vs_round", "acc_vs_nodes", "loss_vs_nodes")

_METRIC_COLUMN = {
    "acc_vs_round": "test_accuracy",
    "loss_vs_round": "train_loss",
    "acc_vs_nodes": "test_accuracy",
    "loss_vs_nodes": "train_loss",
}
_METRIC_LABEL = {"test_accuracy": "test accuracy", "train_loss": "training loss"}


def read_metrics_csv(path) -> list:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        rows = []
        for raw in reader:
            rows.append(
                {
                    "scheme": raw["scheme"],
                    "nodes": int(raw["nodes"]),
                    "seed": int(raw["seed"]),
                    "round": int(raw["round"]),
                    "train_loss": float(raw["train_loss"]) if raw["train_loss"] else None,
                    "test_accuracy": (
                        float(raw["test_accuracy"]) if raw["test_accuracy"] else None
                    ),
                    "grad_norm": float(raw["grad_norm"]) if raw["grad_norm"] else None,
                    "optimality_gap": (
                        float(raw["optimality_gap"]) if raw["optimality_gap"] else None
                    ),
                }
            )
        return rows


def _series_vs_round(rows, column):
    groups = defaultdict(lambda: defaultdict(dict))  # (scheme, nodes) -> seed -> round -> val
    for r in rows:
        if r[column] is None:
            continue
        groups[(r["scheme"], r["nodes"])][r["seed"]][r["round"]] = r[column]
    series = {}
    for key, by_seed in sorted(groups.items()):
        rounds = sorted(set.intersection(*(set(d) for d in by_seed.values())))
        if not rounds:
            continue
        stack = np.array([[by_seed[s][t] for t in rounds] for s in sorted(by_seed)])
        series[key] = (np.array(rounds), stack)
    return series


def _series_vs_nodes(rows, column):
    finals = defaultdict(dict)  # (scheme, nodes, seed) -> last round value
    last_round = defaultdict(int)
    for r in rows:
        if r[column] is None:
            continue
        k = (r["scheme"], r["nodes"], r["seed"])
        if r["round"] >= last_round[k]:
            last_round[k] = r["round"]
            finals[k] = r[column]
    by_scheme = defaultdict(lambda: defaultdict(list))  # scheme -> nodes -> [values]
    for (scheme, nodes, _seed), val in finals.items():
        by_scheme[scheme][nodes].append(val)
    series = {}
    for scheme in sorted(by_scheme):
        ns = sorted(by_scheme[scheme])
        means = np.array([np.mean(by_scheme[scheme][n]) for n in ns])
        lows = np.array([np.min(by_scheme[scheme][n]) for n in ns])
        highs = np.array([np.max(by_scheme[scheme][n]) for n in ns])
        series[scheme] = (np.array(ns), means, lows, highs)
    return series


def emit_plot(csv_path, kind: str, out_path) -> None:
    """Render one plot kind from a metrics CSV to a vector-graphic file."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}, expected one of {PLOT_KINDS}")
    rows = read_metrics_csv(csv_path)
    column = _METRIC_COLUMN[kind]

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    plotted = 0
    if kind.endswith("_vs_round"):
        multiple_n = len({r["nodes"] for r in rows}) > 1
        for (scheme, nodes), (rounds, stack) in _series_vs_round(rows, column).items():
            label = f"{scheme} (N={nodes})" if multiple_n else scheme
            mean = stack.mean(axis=0)
            ax.plot(rounds, mean, label=label)
            if stack.shape[0] > 1:
                ax.fill_between(
                    rounds, stack.min(axis=0), stack.max(axis=0), alpha=0.2, lw=0
                )
            plotted += 1
        ax.set_xlabel("round")
    else:
        for scheme, (ns, means, lows, highs) in _series_vs_nodes(rows, column).items():
            ax.plot(ns, means, marker="o", label=scheme)
            if not np.allclose(lows, highs):
                ax.fill_between(ns, lows, highs, alpha=0.2, lw=0)
            plotted += 1
        ax.set_xlabel("number of nodes")
    if plotted == 0:
        plt.close(fig)
        raise ValueError(f"no rows with {column} values in {csv_path}")
    ax.set_ylabel(_METRIC_LABEL[column])
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, metadata=_deterministic_metadata(out_path))
    plt.close(fig)


def _deterministic_metadata(out_path) -> dict | None:
    name = str(out_path).lower()
    if name.endswith(".svg"):
        return {"Date": None}
    if name.endswith(".pdf"):
        return {"CreationDate": None}
    return None
