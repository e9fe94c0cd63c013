"""Plain gradient descent."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidConfigError, NonFiniteGradientError, ShapeMismatchError


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float,
             prefix: str = "") -> dict[str, np.ndarray]:
    """In-place ``param -= lr * grad`` for every gradient given.

    All gradients are validated before any parameter changes, so a bad
    gradient leaves the model untouched.
    """
    if lr < 0:
        raise InvalidConfigError(f"learning rate must be non-negative, got {lr}")
    for name, g in grads.items():
        if name not in params or params[name].shape != np.shape(g):
            raise ShapeMismatchError(f"gradient {prefix}{name} does not match its parameter")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {prefix}{name}")
    for name, g in grads.items():
        params[name] -= lr * g
    return params
