"""Experiment configuration: YAML loading, validation, and echo.

Configs are a key-value tree with four sections (dataset, noise, trainer,
plus top-level sweep fields). Unknown keys are rejected by name so typos
fail fast; all defaults are resolved at load time and echoed back out, and
loading the echo reproduces the identical experiment.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import yaml

from .channel import COMBINE_SUM, COMBINE_TRIANGLE, EXPECTATION, WORST_CASE, NoiseSpec
from .training import CHANNEL_MODES, RLA_MODES, SCHEMES, TrainerConfig

DATASET_KINDS = ("synthetic", "mnist", "synthetic_images")


class ConfigError(ValueError):
    """Configuration file failed to parse or validate."""


@dataclass
class DatasetConfig:
    kind: str = "synthetic"
    # synthetic (vector) problems
    d: int = 10
    n: int = 500
    margin: float = 0.1
    flip_prob: float = 0.0
    seed: int = 0
    # mnist-format IDX pairs
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    subsample_train: int | None = None
    subsample_test: int | None = None
    subsample_seed: int = 0
    # generated image corpus
    n_train: int = 10_000
    n_test: int = 2_000

    def validate(self) -> None:
        if self.kind not in DATASET_KINDS:
            raise ConfigError(
                f"dataset.kind: unknown kind {self.kind!r}, expected one of {DATASET_KINDS}"
            )
        if self.kind == "mnist":
            if not self.train_images or not self.train_labels:
                raise ConfigError(
                    "dataset.train_images and dataset.train_labels are required for kind=mnist"
                )


@dataclass
class NoiseConfig:
    kind: str = EXPECTATION
    center: float = 0.0
    node: float | list = 1.0
    combine_rule: str = COMBINE_SUM

    def validate(self) -> None:
        if self.kind not in (EXPECTATION, WORST_CASE):
            raise ConfigError(f"noise.kind: unknown kind {self.kind!r}")
        if self.combine_rule not in (COMBINE_SUM, COMBINE_TRIANGLE):
            raise ConfigError(f"noise.combine_rule: unknown rule {self.combine_rule!r}")
        nodes = self.node if isinstance(self.node, list) else [self.node]
        if self.center < 0 or any(v < 0 for v in nodes):
            raise ConfigError("noise.center and noise.node must be >= 0")

    def spec_for(self, n_nodes: int) -> NoiseSpec:
        if isinstance(self.node, list):
            if len(self.node) != n_nodes:
                raise ConfigError(
                    f"noise.node lists {len(self.node)} entries but the run has "
                    f"{n_nodes} nodes"
                )
            node = self.node
        else:
            node = [self.node] * n_nodes
        return NoiseSpec(self.kind, self.center, node, self.combine_rule)


@dataclass
class TrainerSettings:
    eta: float = 0.01
    rounds: int = 500
    alpha: float = 0.75
    beta: float = 0.6
    lam: float = 1.0
    inner_iters: int = 200
    inner_tol: float = 1e-8
    rla_mode: str = "scaled"
    stop_tol: float = 1e-6
    mu: float = 0.0
    shared_sample: bool = False
    channel_mode: str = "combined"
    inject_noise: bool = True

    def validate(self, schemes: list) -> None:
        try:
            for scheme in schemes:
                self.trainer_config(scheme, n_nodes=1, master_seed=0)
        except ValueError as exc:
            raise ConfigError(f"trainer: {exc}") from exc

    def trainer_config(self, scheme: str, n_nodes: int, master_seed: int) -> TrainerConfig:
        return TrainerConfig(
            scheme=scheme,
            eta=self.eta,
            rounds=self.rounds,
            n_nodes=n_nodes,
            alpha=self.alpha,
            beta=self.beta,
            lam=self.lam,
            inner_iters=self.inner_iters,
            inner_tol=self.inner_tol,
            rla_mode=self.rla_mode,
            stop_tol=self.stop_tol,
            mu=self.mu,
            shared_sample=self.shared_sample,
            channel_mode=self.channel_mode,
            inject_noise=self.inject_noise,
            master_seed=master_seed,
        )


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    trainer: TrainerSettings = field(default_factory=TrainerSettings)
    schemes: list = field(default_factory=lambda: ["centralized"])
    node_counts: list = field(default_factory=lambda: [1])
    seeds: list = field(default_factory=lambda: [0])
    out_dir: str = "results"

    def validate(self) -> None:
        if not self.schemes:
            raise ConfigError("schemes: at least one scheme is required")
        for scheme in self.schemes:
            if scheme not in SCHEMES:
                raise ConfigError(
                    f"schemes: unknown scheme {scheme!r}, expected one of {SCHEMES}"
                )
        if not self.node_counts or any(n < 1 for n in self.node_counts):
            raise ConfigError("node_counts: need at least one entry, all >= 1")
        if not self.seeds:
            raise ConfigError("seeds: at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds: entries must be distinct")
        self.dataset.validate()
        self.noise.validate()
        self.trainer.validate(self.schemes)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def _build(cls, section: dict, prefix: str):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(f"unknown field {prefix + name!r}")
    return cls(**section)


def config_from_dict(tree: dict) -> ExperimentConfig:
    if not isinstance(tree, dict):
        raise ConfigError(f"config root must be a mapping, got {type(tree).__name__}")
    tree = dict(tree)
    sections = {}
    for key, cls in (
        ("dataset", DatasetConfig),
        ("noise", NoiseConfig),
        ("trainer", TrainerSettings),
    ):
        raw = tree.pop(key, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"{key} section must be a mapping")
        sections[key] = _build(cls, raw, prefix=f"{key}.")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(tree) - known
    if unknown:
        raise ConfigError(f"unknown field {sorted(unknown)[0]!r}")
    config = ExperimentConfig(**sections, **tree)
    config.validate()
    return config


def load_config(path) -> ExperimentConfig:
    """Parse and validate a YAML experiment config, resolving all defaults."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            tree = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" at line {mark.line + 1}" if mark is not None else ""
            raise ConfigError(f"{path}: parse error{where}: {exc}") from exc
    if tree is None:
        tree = {}
    return config_from_dict(tree)


def dump_config(config: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config.to_dict(), f, sort_keys=False)


def config_reference() -> str:
    """Human-readable reference of every config key and its default."""
    lines = ["Experiment configuration keys (YAML):", ""]
    for section, cls in (
        ("dataset", DatasetConfig),
        ("noise", NoiseConfig),
        ("trainer", TrainerSettings),
    ):
        lines.append(f"[{section}]")
        for f in fields(cls):
            default = f.default if f.default is not dataclass else f.default
            lines.append(f"  {f.name} (default: {default!r})")
        lines.append("")
    lines.append("[top level]")
    for f in fields(ExperimentConfig):
        if f.name in ("dataset", "noise", "trainer"):
            continue
        if f.default_factory is not None and f.default_factory is not dataclass:  # type: ignore[misc]
            try:
                default = f.default_factory()  # type: ignore[misc]
            except TypeError:
                default = f.default
        else:
            default = f.default
        lines.append(f"  {f.name} (default: {default!r})")
    lines.append("")
    lines.append(f"schemes: one or more of {SCHEMES}")
    lines.append(f"noise.kind: {EXPECTATION!r} (variances) or {WORST_CASE!r} (squared radii)")
    lines.append(f"trainer.rla_mode: one of {RLA_MODES}")
    lines.append(f"trainer.channel_mode: one of {CHANNEL_MODES}")
    return "\n".join(lines)
