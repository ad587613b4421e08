"""Training schemes and the federated round loop.

Four schemes share one loop skeleton (broadcast-corrupt, local steps,
aggregate, metrics) and differ only in the local-step kernel:

* ``centralized``: full-batch gradient descent on the pooled data, no noise.
* ``conventional``: each node takes a plain gradient step from the noisy
  model copy it received, with no correction.
* ``rla``: like conventional, but the local gradient is that of the
  regularized loss F_j(w) + sigma_e^2 * ||grad F_j(w)||^2, which penalizes
  sharp regions and counteracts Gaussian model noise.
* ``worst_case``: each node minimizes a proximal surrogate built from the
  loss at a norm-bounded noise sample and a recursively averaged gradient
  memory, then moves a decaying fraction gamma^t toward the minimizer.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import (
    NoiseSpec,
    RngStream,
    center_noise,
    combined_noise_param,
    downlink_noise,
)
from .data import LabeledDataset, partition_iid, shards_from_plan
from .losses import (
    evaluate_accuracy,
    hessian_vector_product,
    loss_gradient,
    loss_value,
    smoothness_bound,
)

SCHEMES = ("centralized", "conventional", "rla", "worst_case")
RLA_MODES = ("scaled", "exact_hvp")
CHANNEL_MODES = ("combined", "two_stage")


class TrainingDiverged(RuntimeError):
    """Raised when a run produces a non-finite loss or iterate."""


@dataclass
class TrainerConfig:
    scheme: str = "centralized"
    eta: float = 0.01
    rounds: int = 500
    n_nodes: int = 1
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
    master_seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.rounds < 0:
            raise ValueError(f"rounds must be >= 0, got {self.rounds}")
        if self.n_nodes < 1:
            raise ValueError(f"n_nodes must be >= 1, got {self.n_nodes}")
        if self.lam <= 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if self.rla_mode not in RLA_MODES:
            raise ValueError(f"unknown rla_mode {self.rla_mode!r}")
        if self.channel_mode not in CHANNEL_MODES:
            raise ValueError(f"unknown channel_mode {self.channel_mode!r}")
        if self.scheme == "worst_case" and not (0.5 < self.beta < self.alpha < 1.0):
            raise ValueError(
                "worst_case schedules require 0.5 < beta < alpha < 1, "
                f"got beta={self.beta}, alpha={self.alpha}"
            )


@dataclass
class RoundMetrics:
    round: int
    scheme: str
    train_loss: float
    test_accuracy: float | None
    grad_norm: float
    optimality_gap: float | None
    wall_ms: float


@dataclass
class TrainingResult:
    metrics: list
    final_model: np.ndarray
    stopped_early: bool = False
    inner_unconverged_rounds: int = 0


# ---------------------------------------------------------------------------
# Step kernels
# ---------------------------------------------------------------------------

def aggregate(w_locals: list, sizes: list) -> np.ndarray:
    """Size-weighted mean of local models, reduced in list order."""
    if len(w_locals) == 0:
        raise ValueError("no local models to aggregate")
    if len(w_locals) != len(sizes):
        raise ValueError(f"{len(w_locals)} models but {len(sizes)} sizes")
    total = float(sum(sizes))
    if total <= 0:
        raise ValueError("total dataset size must be > 0")
    if len(w_locals) == 1:
        return w_locals[0].copy()
    acc = np.zeros_like(w_locals[0])
    for w, dj in zip(w_locals, sizes):
        if w.shape != acc.shape:
            raise ValueError(f"model shape {w.shape} != {acc.shape}")
        acc += dj * w
    return acc / total


def centralized_step(w: np.ndarray, data: LabeledDataset, eta: float, mu: float = 0.0) -> np.ndarray:
    if eta <= 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    return w - eta * loss_gradient(w, data, mu)


def conventional_local_step(
    w_received: np.ndarray, shard: LabeledDataset, eta: float, mu: float = 0.0
) -> np.ndarray:
    if eta <= 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    return w_received - eta * loss_gradient(w_received, shard, mu)


def rla_gradient(
    w: np.ndarray,
    shard: LabeledDataset,
    sigma_e2: float,
    mode: str = "scaled",
    mu: float = 0.0,
) -> np.ndarray:
    """Gradient of the noise-regularized local loss.

    mode="scaled" treats the squared-gradient penalty as a constant rescale,
    giving (1 + sigma_e^2) * grad F_j(w). mode="exact_hvp" differentiates the
    penalty exactly: grad F_j(w) + 2 sigma_e^2 * H(w) grad F_j(w).
    """
    if sigma_e2 < 0:
        raise ValueError(f"sigma_e2 must be >= 0, got {sigma_e2}")
    g = loss_gradient(w, shard, mu)
    if mode == "scaled":
        return (1.0 + sigma_e2) * g
    if mode == "exact_hvp":
        return g + 2.0 * sigma_e2 * hessian_vector_product(w, g, shard, mu)
    raise ValueError(f"unknown rla_mode {mode!r}")


def rla_local_step(
    w_received: np.ndarray,
    shard: LabeledDataset,
    eta: float,
    sigma_e2: float,
    mode: str = "scaled",
    mu: float = 0.0,
) -> np.ndarray:
    if eta <= 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    return w_received - eta * rla_gradient(w_received, shard, sigma_e2, mode, mu)


def gamma_schedule(t: int, alpha: float) -> float:
    """Conditional-step weight 1/t^alpha for t >= 1."""
    if t < 1:
        raise ValueError(f"gamma schedule defined for t >= 1, got {t}")
    return float(t) ** (-alpha)


def rho_schedule(t: int, beta: float) -> float:
    """Surrogate mixing weight: 1 at t = 0, then 1/t^beta."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if t == 0:
        return 1.0
    return float(t) ** (-beta)


def sca_surrogate_value(
    w: np.ndarray,
    w_t: np.ndarray,
    delta: np.ndarray,
    g_prev: np.ndarray,
    rho: float,
    lam: float,
    shard: LabeledDataset,
    mu: float = 0.0,
) -> float:
    """rho * F_j(w + delta) + lam * ||w - w_t||^2 + (1 - rho) * <w - w_t, g_prev>."""
    if not 0 < rho <= 1:
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    if lam <= 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    diff = w - w_t
    return (
        rho * loss_value(w + delta, shard, mu)
        + lam * float(diff @ diff)
        + (1.0 - rho) * float(diff @ g_prev)
    )


def sca_surrogate_gradient(w, w_t, delta, g_prev, rho, lam, shard, mu=0.0) -> np.ndarray:
    return (
        rho * loss_gradient(w + delta, shard, mu)
        + 2.0 * lam * (w - w_t)
        + (1.0 - rho) * g_prev
    )


def sca_solve_surrogate(
    w_t: np.ndarray,
    delta: np.ndarray,
    g_prev: np.ndarray,
    rho: float,
    lam: float,
    shard: LabeledDataset,
    inner_iters: int = 200,
    inner_tol: float = 1e-8,
    beta_hat: float | None = None,
    mu: float = 0.0,
):
    """Minimize the proximal surrogate by plain gradient descent.

    The surrogate is 2*lam strongly convex, so the minimizer is unique; the
    step size 1/(2*lam + rho*beta_hat) is safe for its curvature. Returns
    (w_hat, converged) where converged reports whether the gradient norm
    reached inner_tol before the iteration cap.
    """
    if not 0 < rho <= 1:
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    if lam <= 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    if beta_hat is None:
        beta_hat = smoothness_bound(shard, mu)
    step = 1.0 / (2.0 * lam + rho * beta_hat)
    w = w_t.copy()
    for _ in range(inner_iters):
        g = sca_surrogate_gradient(w, w_t, delta, g_prev, rho, lam, shard, mu)
        if not np.isfinite(g).all():
            raise TrainingDiverged("non-finite surrogate gradient")
        if np.linalg.norm(g) <= inner_tol:
            return w, True
        w = w - step * g
    g = sca_surrogate_gradient(w, w_t, delta, g_prev, rho, lam, shard, mu)
    return w, bool(np.linalg.norm(g) <= inner_tol)


def sca_update_accumulator(
    g_prev: np.ndarray,
    w_t: np.ndarray,
    delta: np.ndarray,
    rho: float,
    shard: LabeledDataset,
    mu: float = 0.0,
) -> np.ndarray:
    """(1 - rho) * g_prev + rho * grad F_j(w_t + delta)."""
    if not 0 < rho <= 1:
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    return (1.0 - rho) * g_prev + rho * loss_gradient(w_t + delta, shard, mu)


def sca_local_step(w_t: np.ndarray, w_hat: np.ndarray, gamma: float) -> np.ndarray:
    """Move a fraction gamma from w_t toward the surrogate minimizer."""
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    if w_hat.shape != w_t.shape:
        raise ValueError(f"shape mismatch {w_hat.shape} vs {w_t.shape}")
    return w_t + gamma * (w_hat - w_t)


# ---------------------------------------------------------------------------
# Round loop
# ---------------------------------------------------------------------------

@dataclass
class TrainState:
    w: np.ndarray
    t: int = 0
    accumulators: list | None = None  # per-node gradient memory (worst_case)


def _resolve_noise(config: TrainerConfig, noise: NoiseSpec | None) -> NoiseSpec:
    if noise is None:
        return NoiseSpec.silent(config.n_nodes)
    if noise.n_nodes == 1 and config.n_nodes > 1:
        return replace(noise, node=np.full(config.n_nodes, noise.node[0]))
    if noise.n_nodes != config.n_nodes:
        raise ValueError(
            f"noise spec covers {noise.n_nodes} nodes but config has {config.n_nodes}"
        )
    return noise


def _worst_case_deltas(
    config: TrainerConfig, noise: NoiseSpec, d: int, streams: RngStream, t: int
) -> list:
    """Per-node boundary samples; one shared draw when configured.

    In two-stage mode only the node-side radius applies here; the center
    term lands on the aggregate separately.
    """
    if not config.inject_noise:
        return [np.zeros(d) for _ in range(config.n_nodes)]
    from .channel import sample_boundary_noise  # local import to keep surface tidy

    if config.channel_mode == "two_stage":
        radii = [float(noise.node[j]) for j in range(config.n_nodes)]
    else:
        radii = [combined_noise_param(noise, j) for j in range(config.n_nodes)]
    if config.shared_sample:
        if any(r != radii[0] for r in radii):
            raise ValueError("shared_sample requires equal radii on all nodes")
        rng = streams.generator(node=0, round=t, purpose="broadcast-shared")
        shared = sample_boundary_noise(d, radii[0], rng)
        return [shared.copy() for _ in range(config.n_nodes)]
    return [
        sample_boundary_noise(
            d, radii[j], streams.generator(node=j, round=t, purpose="downlink")
        )
        for j in range(config.n_nodes)
    ]


def run_round(
    state: TrainState,
    config: TrainerConfig,
    shards: list,
    pooled: LabeledDataset,
    noise: NoiseSpec,
    streams: RngStream,
    beta_hats: list | None = None,
):
    """Advance the global model by one round; returns (new_state, inner_ok)."""
    t = state.t
    sizes = [s.size for s in shards]
    d = state.w.shape[0]
    inner_ok = True

    if config.scheme == "centralized":
        new_w = centralized_step(state.w, pooled, config.eta, config.mu)
        return TrainState(new_w, t + 1, state.accumulators), inner_ok

    if config.scheme in ("conventional", "rla"):
        locals_ = []
        for j, shard in enumerate(shards):
            if config.inject_noise:
                received = state.w + downlink_noise(
                    noise, d, j, streams, round=t, mode=config.channel_mode
                )
            else:
                received = state.w
            if config.scheme == "conventional":
                locals_.append(
                    conventional_local_step(received, shard, config.eta, config.mu)
                )
            else:
                sigma_e2 = combined_noise_param(noise, j)
                locals_.append(
                    rla_local_step(
                        received, shard, config.eta, sigma_e2,
                        config.rla_mode, config.mu,
                    )
                )
        new_w = aggregate(locals_, sizes)
        if config.channel_mode == "two_stage" and config.inject_noise:
            new_w = new_w + center_noise(noise, d, streams, round=t)
        return TrainState(new_w, t + 1, state.accumulators), inner_ok

    # worst_case
    rho = rho_schedule(t, config.beta)
    gamma = gamma_schedule(t + 1, config.alpha)
    deltas = _worst_case_deltas(config, noise, d, streams, t)
    accumulators = state.accumulators or [np.zeros(d) for _ in shards]
    locals_ = []
    new_accumulators = []
    for j, shard in enumerate(shards):
        bh = beta_hats[j] if beta_hats is not None else None
        w_hat, converged = sca_solve_surrogate(
            state.w, deltas[j], accumulators[j], rho, config.lam, shard,
            config.inner_iters, config.inner_tol, beta_hat=bh, mu=config.mu,
        )
        inner_ok = inner_ok and converged
        new_accumulators.append(
            sca_update_accumulator(
                accumulators[j], state.w, deltas[j], rho, shard, config.mu
            )
        )
        locals_.append(sca_local_step(state.w, w_hat, gamma))
    new_w = aggregate(locals_, sizes)
    if config.channel_mode == "two_stage" and config.inject_noise:
        new_w = new_w + center_noise(noise, d, streams, round=t)
    return TrainState(new_w, t + 1, new_accumulators), inner_ok


def run_training(
    config: TrainerConfig,
    train: LabeledDataset,
    noise: NoiseSpec | None = None,
    test: LabeledDataset | None = None,
    reference_loss: float | None = None,
    shards: list | None = None,
) -> TrainingResult:
    """Run the configured scheme for `rounds` rounds (or until the gradient
    norm of the pooled loss drops below stop_tol). Deterministic for a fixed
    config; the metric trace includes a row for the initial model (round 0).
    """
    noise = _resolve_noise(config, noise)
    if shards is None:
        plan = partition_iid(train.size, config.n_nodes, config.master_seed)
        shards = shards_from_plan(train, plan)
    elif len(shards) != config.n_nodes:
        raise ValueError(f"{len(shards)} shards but config has {config.n_nodes} nodes")

    streams = RngStream(config.master_seed)
    beta_hats = None
    if config.scheme == "worst_case":
        beta_hats = [smoothness_bound(s, config.mu) for s in shards]

    state = TrainState(w=np.zeros(train.dim))
    metrics: list = []
    inner_unconverged = 0
    stopped_early = False

    def observe(w: np.ndarray, t: int, wall_ms: float) -> float:
        value = loss_value(w, train, config.mu)
        if not np.isfinite(value):
            raise TrainingDiverged(
                f"{config.scheme}: non-finite loss at round {t} "
                f"(eta={config.eta}, seed={config.master_seed})"
            )
        grad = loss_gradient(w, train, config.mu)
        gap = None if reference_loss is None else value - reference_loss
        metrics.append(
            RoundMetrics(
                round=t,
                scheme=config.scheme,
                train_loss=value,
                test_accuracy=(
                    evaluate_accuracy(w, test) if test is not None else None
                ),
                grad_norm=float(np.linalg.norm(grad)),
                optimality_gap=gap,
                wall_ms=wall_ms,
            )
        )
        return metrics[-1].grad_norm

    observe(state.w, 0, 0.0)
    for _ in range(config.rounds):
        started = time.perf_counter()
        state, inner_ok = run_round(
            state, config, shards, train, noise, streams, beta_hats
        )
        if not inner_ok:
            inner_unconverged += 1
        wall_ms = (time.perf_counter() - started) * 1e3
        grad_norm = observe(state.w, state.t, wall_ms)
        if grad_norm < config.stop_tol:
            stopped_early = True
            break

    return TrainingResult(
        metrics=metrics,
        final_model=state.w,
        stopped_early=stopped_early,
        inner_unconverged_rounds=inner_unconverged,
    )
