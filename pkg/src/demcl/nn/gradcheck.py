"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable

import numpy as np


def numeric_grad(f: Callable[[], float], x: np.ndarray, eps: float = 1e-5,
                 indices=None) -> np.ndarray:
    """``(f(x + eps) - f(x - eps)) / (2 eps)`` per element, perturbing ``x`` in place.

    ``indices`` restricts the check to a subset of flat positions; other
    entries of the result are left at zero.
    """
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    for i in idx:
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """``max |a - b| / max(|a|, |b|, floor)`` elementwise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    den = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / den)) if a.size else 0.0


def check_network(net, x: np.ndarray, eps: float = 1e-5, seed: int = 0, max_checks: int | None = None):
    """Relative errors of input and parameter gradients for ``loss = sum(w * net(x))``.

    Returns a dict ``{name: relative error}`` covering ``"input"`` and every
    parameter.  A random projection ``w`` makes the scalar loss sensitive to
    every output element.
    """
    rng = np.random.default_rng(seed)
    y = net.forward(x)
    w = rng.standard_normal(y.shape)

    def loss():
        return float((net.forward(x) * w).sum())

    net.forward(x)
    dx = net.backward(w)
    analytic = {"input": dx, **{k: v.copy() for k, v in net.gradients().items()}}
    targets = {"input": x, **net.parameters()}
    errors = {}
    for name, arr in targets.items():
        idx = None
        if max_checks is not None and arr.size > max_checks:
            idx = rng.choice(arr.size, max_checks, replace=False)
        num = numeric_grad(loss, arr, eps, idx)
        ana = analytic[name]
        if idx is not None:
            num, ana = num.reshape(-1)[idx], ana.reshape(-1)[idx]
        errors[name] = relative_error(ana, num)
    return errors
