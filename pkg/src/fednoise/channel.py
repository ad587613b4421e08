"""Noisy model-exchange simulation with reproducible per-(node, round) streams.

Two uncertainty models are supported: Gaussian noise described by per-entry
variances ("expectation"), and norm-bounded noise described by squared radii
("worst_case"). The default simulation applies a single combined perturbation
per node per round; a raw two-stage mode (center perturbation after
aggregation, node perturbation on broadcast) exists for ablation.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

EXPECTATION = "expectation"
WORST_CASE = "worst_case"
COMBINE_SUM = "sum"
COMBINE_TRIANGLE = "triangle"


@dataclass(frozen=True)
class NoiseSpec:
    """Center and per-node noise strengths.

    For kind="expectation" the numbers are per-entry Gaussian variances; for
    kind="worst_case" they are squared radii of the uncertainty ball.
    `combine_rule` controls how center and node terms merge for worst_case:
    "sum" adds the squared radii, "triangle" adds the radii before squaring.
    """

    kind: str
    center: float
    node: np.ndarray
    combine_rule: str = COMBINE_SUM

    def __post_init__(self):
        if self.kind not in (EXPECTATION, WORST_CASE):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.combine_rule not in (COMBINE_SUM, COMBINE_TRIANGLE):
            raise ValueError(f"unknown combine_rule {self.combine_rule!r}")
        node = np.atleast_1d(np.asarray(self.node, dtype=np.float64))
        if self.center < 0 or (node < 0).any():
            raise ValueError("noise variances/radii must be >= 0")
        object.__setattr__(self, "node", node)

    @property
    def n_nodes(self) -> int:
        return self.node.shape[0]

    @classmethod
    def expectation(cls, center: float, node, n_nodes: int | None = None) -> "NoiseSpec":
        return cls(EXPECTATION, center, _node_array(node, n_nodes))

    @classmethod
    def worst_case(
        cls,
        center: float,
        node,
        n_nodes: int | None = None,
        combine_rule: str = COMBINE_SUM,
    ) -> "NoiseSpec":
        return cls(WORST_CASE, center, _node_array(node, n_nodes), combine_rule)

    @classmethod
    def silent(cls, n_nodes: int = 1) -> "NoiseSpec":
        return cls(EXPECTATION, 0.0, np.zeros(n_nodes))


def _node_array(node, n_nodes):
    arr = np.atleast_1d(np.asarray(node, dtype=np.float64))
    if n_nodes is not None and arr.shape[0] == 1:
        arr = np.full(n_nodes, arr[0])
    return arr


def combined_noise_param(spec: NoiseSpec, node: int) -> float:
    """Effective variance (or squared radius) of the summed channel noise."""
    if not 0 <= node < spec.n_nodes:
        raise ValueError(f"unknown node id {node} (spec has {spec.n_nodes} nodes)")
    if spec.kind == EXPECTATION or spec.combine_rule == COMBINE_SUM:
        return float(spec.center + spec.node[node])
    return float((np.sqrt(spec.center) + np.sqrt(spec.node[node])) ** 2)


@dataclass(frozen=True)
class RngStream:
    """Derives independent generators from (master_seed, node, round, purpose).

    Identical labels reproduce identical draws regardless of the order in
    which streams are created, so nodes can be simulated in any order.
    """

    master_seed: int

    def generator(
        self, node: int = 0, round: int = 0, purpose: str = ""
    ) -> np.random.Generator:
        tag = zlib.crc32(purpose.encode("utf-8"))
        seq = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(node, round, tag)
        )
        return np.random.default_rng(seq)


def sample_gaussian_noise(d: int, var: float, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. zero-mean Gaussian vector with per-entry variance `var`."""
    if var < 0:
        raise ValueError(f"variance must be >= 0, got {var}")
    if var == 0.0:
        return np.zeros(d)
    return rng.normal(0.0, np.sqrt(var), size=d)


def sample_boundary_noise(d: int, rad2: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform direction scaled so the squared norm equals `rad2` exactly."""
    if rad2 < 0:
        raise ValueError(f"squared radius must be >= 0, got {rad2}")
    if rad2 == 0.0:
        return np.zeros(d)
    while True:
        g = rng.standard_normal(d)
        norm = np.linalg.norm(g)
        if norm > 0.0:
            return g * (np.sqrt(rad2) / norm)


def _perturbation(spec: NoiseSpec, d: int, strength: float, rng) -> np.ndarray:
    if spec.kind == EXPECTATION:
        return sample_gaussian_noise(d, strength, rng)
    return sample_boundary_noise(d, strength, rng)


def downlink_noise(
    spec: NoiseSpec,
    d: int,
    node: int,
    streams: RngStream,
    round: int = 0,
    mode: str = "combined",
) -> np.ndarray:
    """The perturbation a node's received copy of the global model picks up.

    mode="combined" draws one perturbation with the summed center+node
    strength; mode="two_stage" draws only the node's own broadcast term (the
    center term is applied once after aggregation by the trainer).
    """
    rng = streams.generator(node=node, round=round, purpose="downlink")
    if mode == "combined":
        strength = combined_noise_param(spec, node)
    elif mode == "two_stage":
        if not 0 <= node < spec.n_nodes:
            raise ValueError(f"unknown node id {node}")
        strength = float(spec.node[node])
    else:
        raise ValueError(f"unknown channel mode {mode!r}")
    return _perturbation(spec, d, strength, rng)


def corrupt_downlink(
    w: np.ndarray,
    spec: NoiseSpec,
    node: int,
    streams: RngStream,
    round: int = 0,
    mode: str = "combined",
) -> np.ndarray:
    """Global model as received by `node` this round."""
    return w + downlink_noise(spec, w.shape[0], node, streams, round, mode)


def center_noise(
    spec: NoiseSpec, d: int, streams: RngStream, round: int = 0
) -> np.ndarray:
    """Aggregation-side perturbation (two-stage mode only)."""
    rng = streams.generator(node=0, round=round, purpose="center")
    return _perturbation(spec, d, spec.center, rng)


def corrupt_uplink(
    w_locals: list,
    spec: NoiseSpec,
    streams: RngStream,
    round: int = 0,
    mode: str = "combined",
) -> list:
    """Local models as received at the center.

    The default modes are an identity pass-through: the center-side term is
    handled as a single perturbation (combined mode) or applied once to the
    aggregate (two-stage mode). mode="per_link" instead corrupts every uplink
    with an independent center-strength perturbation, for ablations.
    """
    if mode in ("combined", "two_stage"):
        return list(w_locals)
    if mode != "per_link":
        raise ValueError(f"unknown channel mode {mode!r}")
    out = []
    for j, w in enumerate(w_locals):
        rng = streams.generator(node=j, round=round, purpose="uplink")
        out.append(w + _perturbation(spec, w.shape[0], spec.center, rng))
    return out
