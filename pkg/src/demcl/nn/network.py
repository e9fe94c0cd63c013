"""Sequential networks."""

from __future__ import annotations

from typing import Iterable, Iterator

import numpy as np

from ..errors import ShapeMismatchError
from .layers import Layer
from .optim import sgd_step


class Network:
    """An ordered stack of layers applied one after another."""

    def __init__(self, layers: Iterable[Layer], input_shape: tuple[int, ...] | None = None,
                 name: str = "net"):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape) if input_shape is not None else None
        self.name = name
        for i, layer in enumerate(self.layers):
            layer.name = f"{name}/{i:02d}.{layer.kind}"

    def forward(self, x: np.ndarray) -> np.ndarray:
        if self.input_shape is not None and tuple(x.shape[1:]) != self.input_shape:
            raise ShapeMismatchError(
                f"layer {self.layers[0].name}: {self.name} expects per-sample input {self.input_shape}, "
                f"got {tuple(x.shape[1:])}")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def named_parameters(self) -> Iterator[tuple[str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for k, v in layer.params.items():
                yield f"{i:02d}.{layer.kind}/{k}", v

    def parameters(self) -> dict[str, np.ndarray]:
        return dict(self.named_parameters())

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{i:02d}.{layer.kind}/{k}": v
                for i, layer in enumerate(self.layers) for k, v in layer.grads.items()}

    def step(self, lr: float):
        """One gradient-descent update from the gradients of the last backward pass."""
        params = self.parameters()
        sgd_step(params, {k: v for k, v in self.gradients().items() if k in params}, lr,
                 prefix=self.name + "/")
        for layer in self.layers:
            layer.constrain()

    def round_to_float32(self):
        """Round every parameter to the nearest float32 value, in place (checkpoint precision)."""
        for _, v in self.named_parameters():
            v[...] = v.astype(np.float32)

    def n_parameters(self) -> int:
        return sum(v.size for _, v in self.named_parameters())

    def __repr__(self):
        inner = ",\n  ".join(repr(layer) for layer in self.layers)
        return f"Network({self.name!r}, [\n  {inner}\n])"
