"""Squared-hinge classification loss: value, gradient, and curvature kernels.

The per-sample loss is max(0, 1 - y * <w, x>)^2, optionally plus a ridge term
(mu/2) * ||w||^2 on the averaged loss. The squared hinge is convex with a
Lipschitz gradient, which the convergence checks rely on. A margin term is
active iff its deficit 1 - y * <w, x> is strictly positive; points exactly on
the boundary contribute nothing to gradient or curvature.
"""
from __future__ import annotations

import numpy as np

from .data import LabeledDataset


def _as_weight_vector(w, d: int, name: str = "w") -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != d:
        raise ValueError(f"{name} has shape {w.shape}, expected ({d},)")
    return w


def _require_nonempty(data: LabeledDataset) -> None:
    if data.size == 0:
        raise ValueError("dataset is empty")


def loss_value(w, data: LabeledDataset, mu: float = 0.0) -> float:
    """Mean squared-hinge loss plus (mu/2)*||w||^2."""
    _require_nonempty(data)
    w = _as_weight_vector(w, data.dim)
    deficit = 1.0 - data.labels * (data.features @ w)
    active = np.maximum(deficit, 0.0)
    value = float(np.mean(active**2))
    if mu:
        value += 0.5 * mu * float(w @ w)
    return value


def loss_gradient(w, data: LabeledDataset, mu: float = 0.0) -> np.ndarray:
    """Gradient of loss_value; margin terms count iff deficit > 0 strictly."""
    _require_nonempty(data)
    w = _as_weight_vector(w, data.dim)
    deficit = 1.0 - data.labels * (data.features @ w)
    coef = np.where(deficit > 0.0, -2.0 * data.labels * deficit, 0.0)
    grad = (data.features.T @ coef) / data.size
    if mu:
        grad = grad + mu * w
    return grad


def hessian_vector_product(w, v, data: LabeledDataset, mu: float = 0.0) -> np.ndarray:
    """Apply the loss Hessian at w to direction v.

    On the active set the squared hinge is quadratic, so the product is
    (2/n) * sum_active <x_i, v> x_i, plus mu*v for the ridge.
    """
    _require_nonempty(data)
    w = _as_weight_vector(w, data.dim)
    v = _as_weight_vector(v, data.dim, name="v")
    deficit = 1.0 - data.labels * (data.features @ w)
    mask = deficit > 0.0
    Xa = data.features[mask]
    out = 2.0 * (Xa.T @ (Xa @ v)) / data.size
    if mu:
        out = out + mu * v
    return out


def evaluate_accuracy(w, data: LabeledDataset) -> float:
    """Fraction of samples with sign(<w, x>) == y; zero scores count as wrong."""
    _require_nonempty(data)
    w = _as_weight_vector(w, data.dim)
    return float(np.mean(np.sign(data.features @ w) == data.labels))


def smoothness_bound(
    data: LabeledDataset,
    mu: float = 0.0,
    rel_tol: float = 1e-6,
    max_iters: int = 10_000,
) -> float:
    """Gradient-Lipschitz bound 2*lambda_max((1/n) X^T X) + mu by power iteration.

    Raises RuntimeError if the iteration has not stabilized to `rel_tol`
    relative change within `max_iters` steps.
    """
    _require_nonempty(data)
    X = data.features
    n = data.size
    rng = np.random.default_rng(0)
    v = rng.normal(size=data.dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        z = X.T @ (X @ v) / n
        norm = np.linalg.norm(z)
        if norm == 0.0:
            return mu  # data matrix is all zeros
        new_lam = float(v @ z)
        v = z / norm
        if abs(new_lam - lam) <= rel_tol * max(abs(new_lam), 1e-300):
            return 2.0 * new_lam + mu
        lam = new_lam
    raise RuntimeError(
        f"power iteration did not converge within {max_iters} steps"
    )
