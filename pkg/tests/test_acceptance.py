"""Acceptance criteria, one test per criterion, printed as pass/fail lines.

Run with `pytest tests/test_acceptance.py -v -s`. The image-classification
criteria (8-10, 12) use real MNIST IDX files when FEDNOISE_MNIST_DIR points
at a directory containing train-images-idx3-ubyte{,.gz} etc.; otherwise they
fall back to the package's deterministic digit-like corpus at the same scale
(10k train / 2k test, 28x28), which exercises the identical pipeline.

Criteria 3 and 10 encode claims that do not hold for this protocol (see the
repository notes); they are asserted exactly as stated and are expected to
fail honestly rather than being loosened.
"""
import os
import time

import numpy as np
import pytest

from fednoise.analysis import (
    bound_gd,
    bound_rla,
    check_bound_holds,
    fit_rate,
    kendall_tau,
)
from fednoise.channel import NoiseSpec, RngStream, sample_boundary_noise, sample_gaussian_noise
from fednoise.config import config_from_dict
from fednoise.data import ingest_mnist, subsample, synthetic_image_corpus, write_idx_images, write_idx_labels
from fednoise.experiment import run_experiment
from fednoise.losses import smoothness_bound
from fednoise.suites import (
    BENCH_SPEC,
    GD_ROUNDS,
    RATE_WINDOW_GD,
    RATE_WINDOW_SCA,
    gd_bound_trace,
    gradient_suite,
    rla_equivalence_check,
    sca_equivalence_check,
    sca_equivalence_control,
    sca_rate_trace,
)
from fednoise.training import TrainerConfig, run_training

N_SEEDS_ORDERING = 20
SWEEP_NODE_COUNTS = (5, 10, 20, 50)
SWEEP_SEEDS = 10
SWEEP_ROUNDS = 100  # node-count sweeps use a shorter horizon to fit the budget
ORDERING_ROUNDS = 200


def report(criterion, passed, detail, seconds, budget_s):
    status = "PASS" if passed else "FAIL"
    print(f"\n[{status}] criterion {criterion}: {detail} ({seconds:.1f}s, budget {budget_s:.0f}s)")
    return passed and seconds < budget_s


# ---------------------------------------------------------------------------
# desk-scale image data (real MNIST when provided, generated corpus otherwise)
# ---------------------------------------------------------------------------

def _find_mnist(directory):
    names = {
        "train_images": ("train-images-idx3-ubyte", "train-images.idx3-ubyte"),
        "train_labels": ("train-labels-idx1-ubyte", "train-labels.idx1-ubyte"),
        "test_images": ("t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"),
        "test_labels": ("t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"),
    }
    found = {}
    for key, candidates in names.items():
        for base in candidates:
            for suffix in ("", ".gz"):
                path = os.path.join(directory, base + suffix)
                if os.path.exists(path):
                    found[key] = path
                    break
            if key in found:
                break
        if key not in found:
            return None
    return found


@pytest.fixture(scope="session")
def image_data(tmp_path_factory):
    mnist_dir = os.environ.get("FEDNOISE_MNIST_DIR", os.path.join("data", "mnist"))
    paths = _find_mnist(mnist_dir) if os.path.isdir(mnist_dir) else None
    if paths is not None:
        train = subsample(ingest_mnist(paths["train_images"], paths["train_labels"]),
                          10_000, seed=0)
        test = subsample(ingest_mnist(paths["test_images"], paths["test_labels"]),
                         2_000, seed=0)
        print(f"\nusing real MNIST from {mnist_dir}")
        return train, test, "mnist"
    workdir = tmp_path_factory.mktemp("corpus")
    tr_i, tr_d, te_i, te_d = synthetic_image_corpus(10_000, 2_000, seed=0)
    files = {}
    for name, (imgs, labs) in {
        "train": (tr_i, tr_d), "test": (te_i, te_d),
    }.items():
        ip, lp = workdir / f"{name}-img.idx", workdir / f"{name}-lab.idx"
        write_idx_images(ip, imgs)
        write_idx_labels(lp, labs)
        files[name] = (ip, lp)
    train = ingest_mnist(*files["train"])
    test = ingest_mnist(*files["test"])
    print("\nusing generated digit-like corpus (set FEDNOISE_MNIST_DIR for real MNIST)")
    return train, test, "generated"


@pytest.fixture(scope="module")
def gd_trace():
    return gd_bound_trace()


def _ordering_run(scheme, seed, train, test, kind, n_nodes, rounds):
    noise = (
        NoiseSpec.expectation(0.0, 1.0, n_nodes=n_nodes)
        if kind == "expectation"
        else NoiseSpec.worst_case(0.0, 1.0, n_nodes=n_nodes)
    )
    config = TrainerConfig(
        scheme=scheme, eta=0.01, rounds=rounds, n_nodes=n_nodes, alpha=0.75,
        beta=0.6, lam=1.0, master_seed=seed, stop_tol=0.0,
    )
    res = run_training(config, train, noise=noise, test=test)
    return res.metrics[-1].test_accuracy, res.metrics[-1].train_loss


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def test_criterion_01_gradient_oracle():
    started = time.perf_counter()
    [result] = gradient_suite(n_instances=100)
    ok = report("1 (gradient oracle)", result.passed, result.measured,
                time.perf_counter() - started, 10)
    assert ok


def test_criterion_02_regularized_round_equivalence():
    started = time.perf_counter()
    rla = rla_equivalence_check()
    ok = report("2 (one-round equivalence, regularized)", rla.passed,
                rla.measured + " vs 1e-9", time.perf_counter() - started, 10)
    assert ok


def test_criterion_03_surrogate_round_equivalence():
    started = time.perf_counter()
    sca = sca_equivalence_check()
    control = sca_equivalence_control()
    detail = f"{sca.measured} vs 1e-6 (homogeneous-shard control: {control.measured})"
    ok = report("3 (one-round equivalence, surrogate)", sca.passed, detail,
                time.perf_counter() - started, 30)
    assert ok, (
        "averaged per-node surrogate minimizers do not equal the pooled "
        "surrogate minimizer for heterogeneous shards; see notes/decisions.md"
    )


def test_criterion_04_plain_descent_bound(gd_trace):
    started = time.perf_counter()
    data, beta_hat, ref = gd_trace
    eta = 1.0 / beta_hat
    dist2 = float(ref.w_star @ ref.w_star)
    rep = check_bound_holds(
        ref.losses, lambda t: bound_gd(t, eta, beta_hat, dist2), ref.f_star
    )
    detail = f"max gap/bound ratio {rep.max_ratio:.4f} over {rep.n_checked} rounds"
    ok = report("4 (plain-descent gap bound)", rep.holds, detail,
                time.perf_counter() - started, 60)
    assert ok


def test_criterion_05_regularized_bound(gd_trace):
    started = time.perf_counter()
    data, beta_hat, ref = gd_trace
    dist2 = float(ref.w_star @ ref.w_star)
    worst = 0.0
    for sigma_e2 in (0.5, 1.0):
        eta_s = 1.0 / ((1.0 + sigma_e2) * beta_hat)
        config = TrainerConfig(
            scheme="rla", eta=eta_s, rounds=GD_ROUNDS, n_nodes=4,
            inject_noise=False, master_seed=0, stop_tol=0.0,
        )
        outcome = run_training(
            config, data, noise=NoiseSpec.expectation(0.0, sigma_e2, n_nodes=4)
        )
        losses = np.array([m.train_loss for m in outcome.metrics])
        rep = check_bound_holds(
            losses, lambda t: bound_rla(t, eta_s, beta_hat, sigma_e2, dist2),
            ref.f_star,
        )
        worst = max(worst, rep.max_ratio)
        assert rep.holds, f"bound violated at sigma_e2={sigma_e2}, t={rep.first_violation}"
    # at sigma_e2 = 0 the regularized bound must reproduce criterion 4's bound
    eta = 1.0 / beta_hat
    same = all(
        bound_rla(t, eta, beta_hat, 0.0, dist2) == bound_gd(t, eta, beta_hat, dist2)
        for t in range(1, GD_ROUNDS + 1)
    )
    detail = f"max gap/bound ratio {worst:.4f}; sigma=0 bound identical: {same}"
    ok = report("5 (regularized gap bound)", same, detail,
                time.perf_counter() - started, 60)
    assert ok


def test_criterion_06_one_over_t_rate(gd_trace):
    started = time.perf_counter()
    _, _, ref = gd_trace
    gaps = ref.losses - ref.f_star
    fit = fit_rate(gaps, window=RATE_WINDOW_GD)
    passed = -1.3 <= fit.slope <= -0.9 and fit.r_squared > 0.98
    detail = f"slope {fit.slope:.3f} in [-1.3, -0.9], R^2 {fit.r_squared:.4f} > 0.98"
    ok = report("6 (1/t rate fit)", passed, detail, time.perf_counter() - started, 10)
    assert ok


def test_criterion_07_gamma_rate_shape():
    started = time.perf_counter()
    gaps = sca_rate_trace()
    fit = fit_rate(gaps, schedule="gamma_t", alpha=0.75, window=RATE_WINDOW_SCA)
    passed = fit.slope >= 0.9 and fit.r_squared > 0.95
    detail = f"slope {fit.slope:.3f} >= 0.9, R^2 {fit.r_squared:.4f} > 0.95"
    ok = report("7 (gamma^t rate shape)", passed, detail,
                time.perf_counter() - started, 120)
    assert ok


def test_criterion_08_expectation_ordering(image_data):
    train, test, source = image_data
    started = time.perf_counter()
    acc_cent, _ = _ordering_run("centralized", 0, train, test, "expectation",
                                10, ORDERING_ROUNDS)
    wins = 0
    accs_conv, accs_rla = [], []
    for seed in range(N_SEEDS_ORDERING):
        a_conv, _ = _ordering_run("conventional", seed, train, test,
                                  "expectation", 10, ORDERING_ROUNDS)
        a_rla, _ = _ordering_run("rla", seed, train, test, "expectation",
                                 10, ORDERING_ROUNDS)
        accs_conv.append(a_conv)
        accs_rla.append(a_rla)
        wins += a_rla > a_conv
    mean_conv, mean_rla = np.mean(accs_conv), np.mean(accs_rla)
    passed = acc_cent > mean_rla > mean_conv and wins >= 0.9 * N_SEEDS_ORDERING
    detail = (
        f"[{source}] centralized {acc_cent:.4f} > regularized {mean_rla:.4f} > "
        f"conventional {mean_conv:.4f}; wins {wins}/{N_SEEDS_ORDERING}"
    )
    ok = report("8 (expectation-noise ordering)", passed, detail,
                time.perf_counter() - started, 15 * 60)
    assert ok


def test_criterion_09_worst_case_ordering(image_data):
    train, test, source = image_data
    started = time.perf_counter()
    acc_wins = loss_wins = 0
    accs_c, accs_s, losses_c, losses_s = [], [], [], []
    for seed in range(N_SEEDS_ORDERING):
        a_c, l_c = _ordering_run("conventional", seed, train, test,
                                 "worst_case", 10, ORDERING_ROUNDS)
        a_s, l_s = _ordering_run("worst_case", seed, train, test,
                                 "worst_case", 10, ORDERING_ROUNDS)
        accs_c.append(a_c); accs_s.append(a_s)
        losses_c.append(l_c); losses_s.append(l_s)
        acc_wins += a_s > a_c
        loss_wins += l_s < l_c
    passed = (
        np.mean(accs_s) > np.mean(accs_c)
        and np.mean(losses_s) < np.mean(losses_c)
        and acc_wins >= 0.9 * N_SEEDS_ORDERING
        and loss_wins >= 0.9 * N_SEEDS_ORDERING
    )
    detail = (
        f"[{source}] acc {np.mean(accs_s):.4f} vs {np.mean(accs_c):.4f} "
        f"(wins {acc_wins}/{N_SEEDS_ORDERING}); loss {np.mean(losses_s):.4f} vs "
        f"{np.mean(losses_c):.4f} (wins {loss_wins}/{N_SEEDS_ORDERING})"
    )
    ok = report("9 (worst-case ordering)", passed, detail,
                time.perf_counter() - started, 20 * 60)
    assert ok


def test_criterion_10_node_count_trend(image_data):
    train, test, source = image_data
    started = time.perf_counter()
    all_pass = True
    details = [f"[{source}]"]
    for kind, robust in (("expectation", "rla"), ("worst_case", "worst_case")):
        mean_acc = {}
        for scheme in ("conventional", robust):
            for n in SWEEP_NODE_COUNTS:
                accs = [
                    _ordering_run(scheme, seed, train, test, kind, n, SWEEP_ROUNDS)[0]
                    for seed in range(SWEEP_SEEDS)
                ]
                mean_acc[(scheme, n)] = float(np.mean(accs))
        for scheme in ("conventional", robust):
            series = [mean_acc[(scheme, n)] for n in SWEEP_NODE_COUNTS]
            tau = kendall_tau(SWEEP_NODE_COUNTS, series)
            all_pass = all_pass and tau <= 0
            details.append(f"{kind}/{scheme} tau={tau:+.2f}")
        gap5 = mean_acc[(robust, 5)] - mean_acc[("conventional", 5)]
        gap50 = mean_acc[(robust, 50)] - mean_acc[("conventional", 50)]
        all_pass = all_pass and gap50 >= gap5
        details.append(f"{kind} gap N=5 {gap5:+.4f} N=50 {gap50:+.4f}")
    ok = report("10 (node-count trend)", all_pass, "; ".join(details),
                time.perf_counter() - started, 30 * 60)
    assert ok, (
        "with i.i.d. shards, full participation, and one local step per round, "
        "channel-noise averaging improves with N; see notes/decisions.md"
    )


def test_criterion_11_noise_model_properties():
    started = time.perf_counter()
    streams = RngStream(5)
    worst = 0.0
    for k in range(10_000):
        delta = sample_boundary_noise(
            17, 1.0, streams.generator(node=0, round=k, purpose="downlink")
        )
        worst = max(worst, abs(float(delta @ delta) - 1.0))
    rng = np.random.default_rng(1234)
    draws = np.stack([sample_gaussian_noise(1000, 1.0, rng) for _ in range(10_000)])
    mean_ok = np.abs(draws.mean(axis=0)).max() < 4.0 / np.sqrt(10_000)
    var_ok = np.abs(draws.var(axis=0) - 1.0).max() < 0.05
    passed = worst < 1e-12 and mean_ok and var_ok
    detail = (
        f"boundary norm error {worst:.2e} < 1e-12; gaussian moments ok: "
        f"mean {mean_ok}, var {var_ok}"
    )
    ok = report("11 (noise-model properties)", passed, detail,
                time.perf_counter() - started, 30)
    assert ok


def test_criterion_12_csv_determinism(tmp_path):
    started = time.perf_counter()
    # two criterion-8 seeds through the full experiment layer, run twice
    tree = {
        "dataset": {"kind": "synthetic_images", "n_train": 10_000, "n_test": 2_000, "seed": 0},
        "schemes": ["conventional", "rla"],
        "node_counts": [10],
        "seeds": [0, 1],
        "noise": {"kind": "expectation", "center": 0.0, "node": 1.0},
        "trainer": {"eta": 0.01, "rounds": ORDERING_ROUNDS, "stop_tol": 0.0},
    }
    blobs = []
    for rep_dir in ("first", "second"):
        config = config_from_dict({**tree, "out_dir": str(tmp_path / rep_dir)})
        run_experiment(config)
        blobs.append((tmp_path / rep_dir / "metrics.csv").read_bytes())
    passed = blobs[0] == blobs[1]
    detail = f"two repeats, {len(blobs[0])} bytes each, identical: {passed}"
    ok = report("12 (byte-identical reruns)", passed, detail,
                time.perf_counter() - started, 5 * 60)
    assert ok
