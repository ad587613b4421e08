"""Experiment orchestration: dataset loading, run products, and persistence.

A run product is the Cartesian product schemes x node_counts x seeds. All
rows land in one metrics CSV with a fixed column order; per-run summaries
(final metrics, config hash, model digest, timing) go to a JSON file. Both
files are written atomically (temp + rename). The CSV is a pure function of
the config, so reruns are byte-identical; wall-clock timing therefore lives
in the summary JSON and the CSV's wall_ms column is left empty.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .data import (
    LabeledDataset,
    generate_synthetic,
    ingest_mnist,
    subsample,
    synthetic_image_corpus,
    write_idx_images,
    write_idx_labels,
    SyntheticSpec,
)
from .training import RoundMetrics, run_training

CSV_HEADER = "scheme,nodes,seed,round,train_loss,test_accuracy,grad_norm,optimality_gap,wall_ms"


@dataclass
class RunResult:
    scheme: str
    nodes: int
    seed: int
    metrics: list
    final_model_digest: str
    wall_seconds: float
    stopped_early: bool
    inner_unconverged_rounds: int

    def final(self) -> RoundMetrics:
        return self.metrics[-1]


def load_dataset(config: ExperimentConfig, workdir: str | None = None):
    """Materialize (train, test) for the config's dataset section.

    Generated image corpora are round-tripped through IDX files so every
    experiment exercises the same ingestion path as real digit data.
    """
    ds = config.dataset
    if ds.kind == "synthetic":
        spec = SyntheticSpec(
            d=ds.d, n=ds.n, margin=ds.margin, flip_prob=ds.flip_prob, seed=ds.seed
        )
        return generate_synthetic(spec), None
    if ds.kind == "mnist":
        train = ingest_mnist(ds.train_images, ds.train_labels)
        test = None
        if ds.test_images and ds.test_labels:
            test = ingest_mnist(ds.test_images, ds.test_labels)
        if ds.subsample_train:
            train = subsample(train, ds.subsample_train, ds.subsample_seed)
        if test is not None and ds.subsample_test:
            test = subsample(test, ds.subsample_test, ds.subsample_seed)
        return train, test
    # synthetic_images
    workdir = workdir or os.path.join(config.out_dir, "data")
    os.makedirs(workdir, exist_ok=True)
    paths = {
        name: os.path.join(workdir, f"{name}-s{ds.seed}-{ds.n_train}-{ds.n_test}.idx")
        for name in ("train-images", "train-labels", "test-images", "test-labels")
    }
    if not all(os.path.exists(p) for p in paths.values()):
        tr_i, tr_d, te_i, te_d = synthetic_image_corpus(ds.n_train, ds.n_test, seed=ds.seed)
        write_idx_images(paths["train-images"], tr_i)
        write_idx_labels(paths["train-labels"], tr_d)
        write_idx_images(paths["test-images"], te_i)
        write_idx_labels(paths["test-labels"], te_d)
    train = ingest_mnist(paths["train-images"], paths["train-labels"])
    test = ingest_mnist(paths["test-images"], paths["test-labels"])
    return train, test


def _model_digest(w: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(w, dtype=np.float64).tobytes()).hexdigest()


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def metrics_csv_rows(scheme: str, nodes: int, seed: int, metrics: list) -> list:
    rows = []
    for m in metrics:
        rows.append(
            f"{scheme},{nodes},{seed},{m.round},{_fmt(m.train_loss)},"
            f"{_fmt(m.test_accuracy)},{_fmt(m.grad_norm)},{_fmt(m.optimality_gap)},"
        )
    return rows


def atomic_write_text(path: str, content: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_experiment(config: ExperimentConfig, out_dir: str | None = None) -> list:
    """Execute the full run product and persist metrics + summary.

    Returns the RunResult list. Raises TrainingDiverged if any run produces a
    non-finite loss.
    """
    config.validate()
    out_dir = out_dir or config.out_dir
    train, test = load_dataset(config)

    results: list = []
    csv_lines = [CSV_HEADER]
    for scheme in config.schemes:
        for nodes in config.node_counts:
            for seed in config.seeds:
                trainer = config.trainer.trainer_config(scheme, nodes, seed)
                noise = config.noise.spec_for(nodes)
                started = time.perf_counter()
                outcome = run_training(trainer, train, noise=noise, test=test)
                wall = time.perf_counter() - started
                csv_lines.extend(
                    metrics_csv_rows(scheme, nodes, seed, outcome.metrics)
                )
                results.append(
                    RunResult(
                        scheme=scheme,
                        nodes=nodes,
                        seed=seed,
                        metrics=outcome.metrics,
                        final_model_digest=_model_digest(outcome.final_model),
                        wall_seconds=wall,
                        stopped_early=outcome.stopped_early,
                        inner_unconverged_rounds=outcome.inner_unconverged_rounds,
                    )
                )

    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(os.path.join(out_dir, "metrics.csv"), "\n".join(csv_lines) + "\n")

    summary = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "runs": [
            {
                "scheme": r.scheme,
                "nodes": r.nodes,
                "seed": r.seed,
                "rounds": len(r.metrics) - 1,
                "final_train_loss": r.final().train_loss,
                "final_test_accuracy": r.final().test_accuracy,
                "final_grad_norm": r.final().grad_norm,
                "final_model_digest": r.final_model_digest,
                "wall_seconds": r.wall_seconds,
                "stopped_early": r.stopped_early,
                "inner_unconverged_rounds": r.inner_unconverged_rounds,
            }
            for r in results
        ],
    }
    atomic_write_text(
        os.path.join(out_dir, "summary.json"), json.dumps(summary, indent=2) + "\n"
    )
    return results
