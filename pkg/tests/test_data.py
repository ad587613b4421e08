import gzip
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fednoise.data import (
    LabeledDataset,
    SyntheticSpec,
    generate_synthetic,
    ingest_mnist,
    partition_iid,
    read_idx_images,
    read_idx_labels,
    shards_from_plan,
    subsample,
    synthetic_image_corpus,
    write_idx_images,
    write_idx_labels,
)
from fednoise.losses import loss_gradient, loss_value, smoothness_bound


# ---------------------------------------------------------------------------
# IDX parsing
# ---------------------------------------------------------------------------

def write_pair(tmp_path, images, labels, compress=False):
    img_path = tmp_path / ("img.idx.gz" if compress else "img.idx")
    lab_path = tmp_path / ("lab.idx.gz" if compress else "lab.idx")
    write_idx_images(img_path, images, compress=compress)
    write_idx_labels(lab_path, labels, compress=compress)
    return img_path, lab_path


def test_single_zero_image_label_seven(tmp_path):
    images = np.zeros((1, 28, 28), dtype=np.uint8)
    img, lab = write_pair(tmp_path, images, np.array([7], dtype=np.uint8))
    data = ingest_mnist(img, lab)
    assert data.size == 1 and data.dim == 785
    assert data.labels[0] == -1  # 7 is odd
    np.testing.assert_array_equal(data.features[0, :784], 0.0)
    assert data.features[0, 784] == 1.0


def test_parity_relabeling_small_fixture(tmp_path):
    images = np.random.default_rng(0).integers(0, 256, size=(3, 4, 4)).astype(np.uint8)
    img, lab = write_pair(tmp_path, images, np.array([0, 1, 2], dtype=np.uint8))
    data = ingest_mnist(img, lab)
    np.testing.assert_array_equal(data.labels, [1, -1, 1])


def test_parity_relabeling_exhaustive(tmp_path):
    images = np.zeros((10, 2, 2), dtype=np.uint8)
    img, lab = write_pair(tmp_path, images, np.arange(10, dtype=np.uint8))
    data = ingest_mnist(img, lab)
    expected = [1 if digit % 2 == 0 else -1 for digit in range(10)]
    np.testing.assert_array_equal(data.labels, expected)


def test_pixels_scaled_to_unit_interval(tmp_path):
    images = np.full((2, 3, 3), 255, dtype=np.uint8)
    images[1] = 51
    img, lab = write_pair(tmp_path, images, np.array([4, 5], dtype=np.uint8))
    data = ingest_mnist(img, lab)
    assert data.features[0, :9].max() == 1.0
    assert data.features[1, 0] == pytest.approx(51 / 255)


def test_idx_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(42)
    images = rng.integers(0, 256, size=(5, 6, 7)).astype(np.uint8)
    labels = rng.integers(0, 10, size=5).astype(np.uint8)
    for compress in (False, True):
        img, lab = write_pair(tmp_path, images, labels, compress=compress)
        np.testing.assert_array_equal(read_idx_images(img), images)
        np.testing.assert_array_equal(read_idx_labels(lab), labels)


def test_gzip_detected_by_magic_not_extension(tmp_path):
    images = np.ones((1, 2, 2), dtype=np.uint8)
    path = tmp_path / "plain_name.idx"  # gzip content despite the extension
    write_idx_images(path, images, compress=True)
    with open(path, "rb") as f:
        assert f.read(2) == b"\x1f\x8b"
    np.testing.assert_array_equal(read_idx_images(path), images)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.idx"
    path.write_bytes(b"\x00\x00\x08\x05" + b"\x00" * 12)
    with pytest.raises(ValueError, match="magic"):
        read_idx_images(path)
    with pytest.raises(ValueError, match="magic"):
        read_idx_labels(path)


def test_truncated_file_rejected(tmp_path):
    images = np.ones((3, 4, 4), dtype=np.uint8)
    path = tmp_path / "trunc.idx"
    write_idx_images(path, images)
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(ValueError, match="expected"):
        read_idx_images(path)


def test_count_mismatch_rejected(tmp_path):
    images = np.ones((3, 2, 2), dtype=np.uint8)
    img, _ = write_pair(tmp_path, images, np.zeros(3, dtype=np.uint8))
    lab2 = tmp_path / "lab2.idx"
    write_idx_labels(lab2, np.zeros(2, dtype=np.uint8))
    with pytest.raises(ValueError, match="count"):
        ingest_mnist(img, lab2)


# ---------------------------------------------------------------------------
# Partitioning
# ---------------------------------------------------------------------------

def test_single_node_gets_everything():
    plan = partition_iid(10, 1, seed=0)
    assert plan.n_nodes == 1
    np.testing.assert_array_equal(plan.node_shards[0], np.arange(10))


def test_three_way_split_sizes():
    plan = partition_iid(10, 3, seed=1)
    assert sorted(plan.shard_sizes(), reverse=True) == [4, 3, 3]
    combined = np.sort(np.concatenate(plan.node_shards))
    np.testing.assert_array_equal(combined, np.arange(10))


def test_partition_deterministic():
    a = partition_iid(100, 7, seed=123)
    b = partition_iid(100, 7, seed=123)
    for sa, sb in zip(a.node_shards, b.node_shards):
        np.testing.assert_array_equal(sa, sb)


def test_partition_rejects_bad_counts():
    with pytest.raises(ValueError):
        partition_iid(10, 0, seed=0)
    with pytest.raises(ValueError):
        partition_iid(3, 4, seed=0)


@settings(max_examples=50, deadline=None)
@given(
    n_samples=st.integers(1, 500),
    n_nodes=st.integers(1, 20),
    seed=st.integers(0, 2**32 - 1),
)
def test_partition_union_and_disjointness(n_samples, n_nodes, seed):
    if n_samples < n_nodes:
        n_nodes = n_samples
    plan = partition_iid(n_samples, n_nodes, seed)
    combined = np.concatenate(plan.node_shards)
    assert combined.shape[0] == n_samples
    np.testing.assert_array_equal(np.sort(combined), np.arange(n_samples))
    sizes = plan.shard_sizes()
    assert max(sizes) - min(sizes) <= 1


def test_shards_from_plan_slices_rows():
    data = LabeledDataset(np.arange(12, dtype=float).reshape(6, 2),
                          np.array([1, -1, 1, -1, 1, -1]))
    plan = partition_iid(6, 2, seed=5)
    shards = shards_from_plan(data, plan)
    assert sum(s.size for s in shards) == 6
    rebuilt = np.vstack([s.features for s in shards])
    assert sorted(map(tuple, rebuilt)) == sorted(map(tuple, data.features))


def test_subsample_deterministic_and_bounded():
    data = LabeledDataset(np.random.default_rng(0).normal(size=(50, 3)),
                          np.ones(50, dtype=int))
    a = subsample(data, 10, seed=3)
    b = subsample(data, 10, seed=3)
    np.testing.assert_array_equal(a.features, b.features)
    with pytest.raises(ValueError):
        subsample(data, 51, seed=0)


# ---------------------------------------------------------------------------
# Synthetic problems
# ---------------------------------------------------------------------------

def test_synthetic_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(d=5, n=10, margin=0.0)
    with pytest.raises(ValueError):
        SyntheticSpec(d=5, n=10, flip_prob=0.5)
    with pytest.warns(UserWarning, match="underdetermined"):
        SyntheticSpec(d=20, n=10)


def test_synthetic_separable_reaches_zero_loss():
    data = generate_synthetic(SyntheticSpec(d=5, n=100, margin=1.0, seed=2))
    beta_hat = smoothness_bound(data)
    w = np.zeros(5)
    for _ in range(20_000):
        g = loss_gradient(w, data)
        if np.linalg.norm(g) < 1e-12:
            break
        w -= g / beta_hat
    assert loss_value(w, data) < 1e-20


def test_synthetic_gradient_descent_drives_gradient_down():
    data = generate_synthetic(SyntheticSpec(d=5, n=200, margin=0.1, seed=0))
    beta_hat = smoothness_bound(data)
    w = np.zeros(5)
    for i in range(100_000):
        g = loss_gradient(w, data)
        if np.linalg.norm(g) < 1e-6:
            break
        w -= g / beta_hat
    assert np.linalg.norm(loss_gradient(w, data)) < 1e-6


def test_synthetic_margin_rejection_and_bias():
    spec = SyntheticSpec(d=6, n=300, margin=0.4, seed=9)
    data = generate_synthetic(spec)
    assert data.size == 300 and data.dim == 6
    np.testing.assert_array_equal(data.features[:, -1], 1.0)


def test_synthetic_determinism_and_seed_sensitivity():
    spec = SyntheticSpec(d=4, n=50, margin=0.2, seed=5)
    a = generate_synthetic(spec)
    b = generate_synthetic(spec)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)
    c = generate_synthetic(SyntheticSpec(d=4, n=50, margin=0.2, seed=6))
    assert not np.array_equal(a.features, c.features)


def test_image_corpus_deterministic_and_ingestible(tmp_path):
    tr_i, tr_d, te_i, te_d = synthetic_image_corpus(40, 10, seed=1)
    tr_i2, tr_d2, _, _ = synthetic_image_corpus(40, 10, seed=1)
    np.testing.assert_array_equal(tr_i, tr_i2)
    np.testing.assert_array_equal(tr_d, tr_d2)
    assert tr_i.shape == (40, 28, 28) and tr_i.dtype == np.uint8
    img, lab = tmp_path / "i.idx", tmp_path / "l.idx"
    write_idx_images(img, tr_i)
    write_idx_labels(lab, tr_d)
    data = ingest_mnist(img, lab)
    assert data.size == 40 and data.dim == 785
    np.testing.assert_array_equal(data.labels, np.where(tr_d % 2 == 0, 1, -1))


@pytest.mark.skipif(
    not os.path.isdir(os.environ.get("FEDNOISE_MNIST_DIR", "data/mnist")),
    reason="real MNIST files not present",
)
def test_real_mnist_training_pair():
    directory = os.environ.get("FEDNOISE_MNIST_DIR", "data/mnist")
    img = os.path.join(directory, "train-images-idx3-ubyte")
    lab = os.path.join(directory, "train-labels-idx1-ubyte")
    img = img if os.path.exists(img) else img + ".gz"
    lab = lab if os.path.exists(lab) else lab + ".gz"
    data = ingest_mnist(img, lab)
    assert data.size == 60_000
    assert data.dim == 785
