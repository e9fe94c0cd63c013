"""Loss functions and their gradients."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError

EPS = 1e-12


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise InvalidInputError(f"labels must lie in [0, {n_classes})")
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _check(labels: np.ndarray, probs: np.ndarray, row_tol: float | None):
    if labels.shape != probs.shape or probs.ndim != 2:
        raise InvalidInputError(f"labels {labels.shape} and probabilities {probs.shape} do not match")
    if row_tol is not None and np.any(np.abs(probs.sum(axis=1) - 1.0) > row_tol):
        raise InvalidInputError("probability rows must sum to 1")


def cross_entropy(labels: np.ndarray, probs: np.ndarray, row_tol: float | None = 1e-6) -> float:
    """Mean over rows of ``-sum_j label_j * log(max(p_j, EPS))``."""
    labels = np.asarray(labels, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    _check(labels, probs, row_tol)
    return float(-(labels * np.log(np.maximum(probs, EPS))).sum() / labels.shape[0])


def cross_entropy_grad(labels: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Gradient of :func:`cross_entropy` with respect to ``probs`` (zero where floored)."""
    labels = np.asarray(labels, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    safe = probs > EPS
    return np.where(safe, -labels / np.where(safe, probs, 1.0), 0.0) / labels.shape[0]


def bce_terms(d_real: np.ndarray | None, d_fake: np.ndarray | None, fake_target: float = 0.0):
    """``(-mean log d_real - mean log(1 - d_fake)) / 2`` and its gradients.

    With ``fake_target=1`` the fake term becomes ``-mean log d_fake``, the
    generator's objective.  Either input may be ``None`` to drop its term.
    """
    loss = 0.0
    g_real = g_fake = None
    if d_real is not None:
        loss += -np.log(np.maximum(d_real, EPS)).mean() / 2
        g_real = np.where(d_real > EPS, -1.0 / (2 * d_real.size * np.maximum(d_real, EPS)), 0.0)
    if d_fake is not None:
        if fake_target == 0.0:
            q = 1.0 - d_fake
            loss += -np.log(np.maximum(q, EPS)).mean() / 2
            g_fake = np.where(q > EPS, 1.0 / (2 * d_fake.size * np.maximum(q, EPS)), 0.0)
        else:
            loss += -np.log(np.maximum(d_fake, EPS)).mean() / 2
            g_fake = np.where(d_fake > EPS, -1.0 / (2 * d_fake.size * np.maximum(d_fake, EPS)), 0.0)
    return float(loss), g_real, g_fake
