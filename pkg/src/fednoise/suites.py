"""Named verification suites behind the `verify` CLI subcommand.

Each suite runs a fixed protocol on a pinned synthetic convex problem and
reports one line per check: gradient correctness against finite differences,
one-round federated/centralized equivalence, value-gap bounds along real
descent traces, and empirical decay-rate fits.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .analysis import (
    bound_gd,
    bound_rla,
    check_bound_holds,
    fit_rate,
    rla_equivalence_deviation,
    sca_equivalence_deviation,
    solve_reference,
)
from .channel import NoiseSpec, RngStream, sample_boundary_noise
from .data import (
    LabeledDataset,
    SyntheticSpec,
    generate_synthetic,
    partition_iid,
    shards_from_plan,
)
from .losses import loss_gradient, loss_value, smoothness_bound
from .training import (
    TrainerConfig,
    TrainState,
    gamma_schedule,
    rho_schedule,
    run_round,
    run_training,
)

SUITES = ("gradients", "equivalence", "bounds", "rates")

# Pinned synthetic convex problem for the bound and rate checks. The margin
# keeps the zero-loss region thin enough that plain descent stays in its
# sublinear phase over the whole 2000-round window.
BENCH_SPEC = SyntheticSpec(d=10, n=500, margin=0.1, flip_prob=0.0, seed=5)
GD_ROUNDS = 2000
RATE_WINDOW_GD = (50, 2000)
SCA_ROUNDS = 500
RATE_WINDOW_SCA = (50, 500)
SCA_RIDGE = 0.2  # conditioning ridge so the surrogate scheme's decay is visible
EQUIV_STATES = 20


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: str
    threshold: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.name}: {self.measured} "
            f"(threshold {self.threshold}, {self.seconds:.1f}s)"
        )


def _bench_data() -> LabeledDataset:
    return generate_synthetic(BENCH_SPEC)


def _bench_shards(data: LabeledDataset, n_nodes: int = 4):
    plan = partition_iid(data.size, n_nodes, seed=7)
    return shards_from_plan(data, plan)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def _finite_difference_gradient(w, data, mu=0.0, step=1e-5) -> np.ndarray:
    g = np.empty_like(w)
    for i in range(w.shape[0]):
        e = np.zeros_like(w)
        e[i] = step
        g[i] = (loss_value(w + e, data, mu) - loss_value(w - e, data, mu)) / (2 * step)
    return g


def gradient_suite(n_instances: int = 100, seed: int = 0) -> list:
    """Analytic gradient vs central finite differences on random instances."""
    rng = np.random.default_rng(seed)
    started = time.perf_counter()
    worst = 0.0
    for _ in range(n_instances):
        d = int(rng.integers(3, 16))
        n = int(rng.integers(5, 41))
        X = rng.normal(size=(n, d))
        y = rng.choice([-1, 1], size=n)
        data = LabeledDataset(X, y)
        w = rng.normal(size=d) * rng.uniform(0.5, 2.0)
        mu = float(rng.choice([0.0, 0.1]))
        g = loss_gradient(w, data, mu)
        g_fd = _finite_difference_gradient(w, data, mu)
        rel = np.linalg.norm(g - g_fd) / max(np.linalg.norm(g_fd), 1e-12)
        worst = max(worst, rel)
    return [
        CheckResult(
            name=f"gradient vs finite differences ({n_instances} instances)",
            passed=worst < 1e-5,
            measured=f"max rel err {worst:.3e}",
            threshold="< 1e-5",
            seconds=time.perf_counter() - started,
        )
    ]


# ---------------------------------------------------------------------------
# equivalence
# ---------------------------------------------------------------------------

def _sca_state(data, shards, rounds: int, seed: int):
    """Replay `rounds` federated surrogate rounds to get a realistic state."""
    config = TrainerConfig(
        scheme="worst_case",
        rounds=rounds,
        n_nodes=len(shards),
        alpha=0.75,
        beta=0.6,
        lam=1.0,
        master_seed=seed,
        shared_sample=True,
        stop_tol=0.0,
    )
    noise = NoiseSpec.worst_case(0.0, 1.0, n_nodes=len(shards))
    streams = RngStream(seed)
    state = TrainState(w=np.zeros(data.dim))
    for _ in range(rounds):
        state, _ = run_round(state, config, shards, data, noise, streams)
    return state


def rla_equivalence_check(n_states: int = EQUIV_STATES) -> CheckResult:
    data = _bench_data()
    shards = _bench_shards(data)
    started = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(n_states):
        w = rng.normal(size=data.dim)
        for sigma_e2 in (0.0, 1.0):
            worst = max(
                worst,
                rla_equivalence_deviation(shards, w, eta=0.01, sigma_e2=sigma_e2),
            )
    return CheckResult(
        name=f"regularized-scheme round equivalence ({n_states} states, sigma in {{0,1}})",
        passed=worst < 1e-9,
        measured=f"max deviation {worst:.3e}",
        threshold="< 1e-9",
        seconds=time.perf_counter() - started,
    )


def sca_equivalence_check(n_states: int = EQUIV_STATES) -> CheckResult:
    data = _bench_data()
    shards = _bench_shards(data)
    started = time.perf_counter()
    worst = 0.0
    for k in range(n_states):
        state = _sca_state(data, shards, rounds=k, seed=100 + k)
        t = state.t
        rho = rho_schedule(t, 0.6)
        gamma = gamma_schedule(t + 1, 0.75)
        accumulators = state.accumulators or [np.zeros(data.dim) for _ in shards]
        delta = sample_boundary_noise(
            data.dim, 1.0, np.random.default_rng(1000 + k)
        )
        dev = sca_equivalence_deviation(
            shards, state.w, delta, accumulators, rho, gamma, lam=1.0,
            inner_tol=1e-10,
        )
        worst = max(worst, dev)
    return CheckResult(
        name=f"surrogate-scheme round equivalence ({n_states} states, shared sample)",
        passed=worst < 1e-6,
        measured=f"max deviation {worst:.3e}",
        threshold="< 1e-6",
        seconds=time.perf_counter() - started,
    )


def sca_equivalence_control(n_states: int = EQUIV_STATES) -> CheckResult:
    """Same measurement with identical shard data at every node.

    The per-node surrogates then coincide, so any deviation is solver-level;
    this separates surrogate heterogeneity (a property of the averaged-argmin
    step) from implementation error.
    """
    data = _bench_data()
    shards = _bench_shards(data)
    started = time.perf_counter()
    homog = [shards[0]] * len(shards)
    worst = 0.0
    rng = np.random.default_rng(13)
    for k in range(n_states):
        w = rng.normal(size=data.dim)
        g = loss_gradient(w, shards[0])
        delta = sample_boundary_noise(data.dim, 1.0, np.random.default_rng(2000 + k))
        rho = rho_schedule(k, 0.6)
        gamma = gamma_schedule(k + 1, 0.75)
        dev = sca_equivalence_deviation(
            homog, w, delta, [g.copy() for _ in homog], rho, gamma, lam=1.0,
            inner_tol=1e-10,
        )
        worst = max(worst, dev)
    return CheckResult(
        name="surrogate-scheme equivalence, homogeneous-shard control",
        passed=worst < 1e-6,
        measured=f"max deviation {worst:.3e}",
        threshold="< 1e-6",
        seconds=time.perf_counter() - started,
    )


def equivalence_suite(n_states: int = EQUIV_STATES) -> list:
    """One federated round vs one centralized round from identical states."""
    return [
        rla_equivalence_check(n_states),
        sca_equivalence_check(n_states),
        sca_equivalence_control(n_states),
    ]


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

def gd_bound_trace():
    """Reference descent on the pinned problem; returns (data, beta, ref)."""
    data = _bench_data()
    beta_hat = smoothness_bound(data)
    ref = solve_reference(data, eta=1.0 / beta_hat, grad_tol=1e-10, record=GD_ROUNDS)
    return data, beta_hat, ref


def bounds_suite() -> list:
    results = []
    started = time.perf_counter()
    data, beta_hat, ref = gd_bound_trace()
    eta = 1.0 / beta_hat
    dist2 = float(ref.w_star @ ref.w_star)  # initial model is the zero vector
    report = check_bound_holds(
        ref.losses, lambda t: bound_gd(t, eta, beta_hat, dist2), ref.f_star
    )
    results.append(
        CheckResult(
            name=f"plain-descent gap bound over {GD_ROUNDS} rounds",
            passed=report.holds,
            measured=(
                f"max gap/bound ratio {report.max_ratio:.3f}"
                + ("" if report.holds else f", first violation t={report.first_violation}")
            ),
            threshold="gap <= bound for all t >= 1",
            seconds=time.perf_counter() - started,
        )
    )

    for sigma_e2 in (0.5, 1.0):
        started = time.perf_counter()
        eta_s = 1.0 / ((1.0 + sigma_e2) * beta_hat)
        config = TrainerConfig(
            scheme="rla",
            eta=eta_s,
            rounds=GD_ROUNDS,
            n_nodes=4,
            inject_noise=False,
            master_seed=0,
            stop_tol=0.0,
        )
        noise = NoiseSpec.expectation(0.0, sigma_e2, n_nodes=4)
        outcome = run_training(
            config, data, noise=noise, shards=_bench_shards(data)
        )
        losses = np.array([m.train_loss for m in outcome.metrics])
        report = check_bound_holds(
            losses,
            lambda t: bound_rla(t, eta_s, beta_hat, sigma_e2, dist2),
            ref.f_star,
        )
        results.append(
            CheckResult(
                name=f"regularized-scheme gap bound (sigma_e2={sigma_e2})",
                passed=report.holds,
                measured=f"max gap/bound ratio {report.max_ratio:.3f}",
                threshold="gap <= bound for all t >= 1",
                seconds=time.perf_counter() - started,
            )
        )

    started = time.perf_counter()
    worst_mismatch = 0.0
    for t in (1, 2, 5, 13, 177, 2000):
        b0 = bound_rla(t, eta, beta_hat, 0.0, dist2)
        bg = bound_gd(t, eta, beta_hat, dist2)
        worst_mismatch = max(worst_mismatch, abs(b0 - bg))
    results.append(
        CheckResult(
            name="regularized bound at sigma_e2=0 equals plain bound",
            passed=worst_mismatch == 0.0,
            measured=f"max |difference| {worst_mismatch:.3e}",
            threshold="exact",
            seconds=time.perf_counter() - started,
        )
    )
    return results


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

def sca_rate_trace():
    """Deterministic surrogate-scheme run whose gap decay is rate-fitted.

    Uses the pinned problem with a small ridge for conditioning and the noise
    sampling disabled, mirroring the deterministic premise of the bound
    checks.
    """
    data = _bench_data()
    ref = solve_reference(data, mu=SCA_RIDGE, grad_tol=1e-10)
    config = TrainerConfig(
        scheme="worst_case",
        rounds=SCA_ROUNDS,
        n_nodes=4,
        alpha=0.75,
        beta=0.6,
        lam=1.0,
        mu=SCA_RIDGE,
        inject_noise=False,
        master_seed=0,
        stop_tol=0.0,
    )
    noise = NoiseSpec.worst_case(0.0, 0.0, n_nodes=4)
    outcome = run_training(
        config, data, noise=noise, reference_loss=ref.f_star,
        shards=_bench_shards(data),
    )
    gaps = np.array([m.optimality_gap for m in outcome.metrics])
    return gaps


def rates_suite() -> list:
    results = []
    started = time.perf_counter()
    _, _, ref = gd_bound_trace()
    gaps = ref.losses - ref.f_star
    fit = fit_rate(gaps, window=RATE_WINDOW_GD)
    ok = -1.3 <= fit.slope <= -0.9 and fit.r_squared > 0.98
    results.append(
        CheckResult(
            name=f"plain-descent decay exponent over t in {RATE_WINDOW_GD}",
            passed=ok,
            measured=f"slope {fit.slope:.3f}, R^2 {fit.r_squared:.4f}",
            threshold="slope in [-1.3, -0.9], R^2 > 0.98",
            seconds=time.perf_counter() - started,
        )
    )

    started = time.perf_counter()
    gaps = sca_rate_trace()
    fit = fit_rate(
        gaps, schedule="gamma_t", alpha=0.75, window=RATE_WINDOW_SCA
    )
    ok = fit.slope >= 0.9 and fit.r_squared > 0.95
    results.append(
        CheckResult(
            name=f"surrogate-scheme decay vs gamma^t over t in {RATE_WINDOW_SCA}",
            passed=ok,
            measured=f"slope {fit.slope:.3f}, R^2 {fit.r_squared:.4f}",
            threshold="slope >= 0.9, R^2 > 0.95",
            seconds=time.perf_counter() - started,
        )
    )
    return results


def run_suite(name: str) -> list:
    if name == "gradients":
        return gradient_suite()
    if name == "equivalence":
        return equivalence_suite()
    if name == "bounds":
        return bounds_suite()
    if name == "rates":
        return rates_suite()
    raise ValueError(f"unknown suite {name!r}, expected one of {SUITES}")
