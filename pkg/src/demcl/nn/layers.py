"""Layers with explicit forward/backward passes.

Every layer maps a batch (first axis) to a batch.  ``forward`` caches what
``backward`` needs; ``backward`` takes the gradient with respect to the
output, stores parameter gradients in ``self.grads`` (overwriting, never
accumulating) and returns the gradient with respect to the input.
Image tensors are ``(N, C, H, W)``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InvalidParameterError, MissingCacheError, ShapeMismatchError, UnsupportedLayerError


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.name = self.kind
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hyper(self) -> list[float]:
        """Numeric hyperparameters needed to rebuild the layer from its params."""
        return []

    @classmethod
    def build(cls, hyper: list[float], params: dict[str, np.ndarray]) -> "Layer":
        return cls()

    def constrain(self):
        """Project parameters back onto their legal domain after an update."""

    def _need_cache(self):
        if self._cache is None:
            raise MissingCacheError(f"{self.name}: backward called before forward")
        return self._cache

    def _shape_error(self, msg: str):
        return ShapeMismatchError(f"layer {self.name}: {msg}")

    def __repr__(self):
        shapes = ", ".join(f"{k}{tuple(v.shape)}" for k, v in self.params.items())
        return f"{type(self).__name__}({shapes})"


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def same_padding(k: int) -> tuple[int, int, int, int]:
    """(top, bottom, left, right) keeping the spatial size at stride 1; even kernels pad more at the end."""
    lo = (k - 1) // 2
    hi = k - 1 - lo
    return (lo, hi, lo, hi)


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int = 1, n_out: int = 1, rng: np.random.Generator | None = None,
                 W: np.ndarray | None = None, b: np.ndarray | None = None):
        super().__init__()
        if W is None:
            rng = rng or np.random.default_rng(0)
            W = _uniform(rng, n_in, (n_in, n_out))
        W = np.asarray(W, dtype=np.float64)
        self.params = {"W": W, "b": np.zeros(W.shape[1]) if b is None else np.asarray(b, dtype=np.float64)}

    @classmethod
    def build(cls, hyper, params):
        return cls(W=params["W"], b=params["b"])

    def forward(self, x):
        W = self.params["W"]
        if x.ndim != 2 or x.shape[1] != W.shape[0]:
            raise self._shape_error(f"expected (N, {W.shape[0]}) input, got {x.shape}")
        self._cache = x
        return x @ W + self.params["b"]

    def backward(self, dy):
        x = self._need_cache()
        self.grads = {"W": x.T @ dy, "b": dy.sum(axis=0)}
        return dy @ self.params["W"].T


class Conv2D(Layer):
    kind = "conv2d"

    def __init__(self, c_in: int = 1, c_out: int = 1, kernel: int = 3, stride: int = 1,
                 padding: int | str | tuple = "same", rng: np.random.Generator | None = None,
                 W: np.ndarray | None = None, b: np.ndarray | None = None):
        super().__init__()
        if W is None:
            rng = rng or np.random.default_rng(0)
            W = _uniform(rng, c_in * kernel * kernel, (c_out, c_in, kernel, kernel))
        W = np.asarray(W, dtype=np.float64)
        k = W.shape[2]
        if padding == "same":
            padding = same_padding(k)
        elif isinstance(padding, (int, np.integer)):
            padding = (int(padding),) * 4
        self.padding = tuple(int(p) for p in padding)
        self.stride = int(stride)
        self.params = {"W": W, "b": np.zeros(W.shape[0]) if b is None else np.asarray(b, dtype=np.float64)}

    def hyper(self):
        return [float(self.stride), *map(float, self.padding)]

    @classmethod
    def build(cls, hyper, params):
        stride, *pad = (int(h) for h in hyper)
        return cls(stride=stride, padding=tuple(pad), W=params["W"], b=params["b"])

    def forward(self, x):
        W = self.params["W"]
        O, C, k, _ = W.shape
        if x.ndim != 4 or x.shape[1] != C:
            raise self._shape_error(f"expected (N, {C}, H, W) input, got {x.shape}")
        pt, pb, pl, pr = self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
        if xp.shape[2] < k or xp.shape[3] < k:
            raise self._shape_error(f"input {x.shape[2:]} smaller than kernel {k}")
        s = self.stride
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        out = np.tensordot(win, W, axes=([1, 4, 5], [1, 2, 3]))
        self._cache = (x.shape, xp.shape, win)
        return out.transpose(0, 3, 1, 2) + self.params["b"][None, :, None, None]

    def backward(self, dy):
        x_shape, xp_shape, win = self._need_cache()
        W = self.params["W"]
        k = W.shape[2]
        s = self.stride
        Ho, Wo = dy.shape[2], dy.shape[3]
        self.grads = {"W": np.tensordot(dy, win, axes=([0, 2, 3], [0, 2, 3])),
                      "b": dy.sum(axis=(0, 2, 3))}
        dxp = np.zeros(xp_shape)
        for i in range(k):
            for j in range(k):
                contrib = np.tensordot(dy, W[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
                dxp[:, :, i:i + s * (Ho - 1) + 1:s, j:j + s * (Wo - 1) + 1:s] += contrib
        pt, _, pl, _ = self.padding
        return dxp[:, :, pt:pt + x_shape[2], pl:pl + x_shape[3]]


class MultiScaleConv(Layer):
    """Parallel same-padded convolutions of different kernel sizes, concatenated on channels."""

    kind = "multiscale-conv"

    def __init__(self, c_in: int = 1, c_branch: int = 8, kernels=(3, 4, 5),
                 rng: np.random.Generator | None = None, branches: list[Conv2D] | None = None):
        super().__init__()
        if branches is None:
            rng = rng or np.random.default_rng(0)
            branches = [Conv2D(c_in, c_branch, k, 1, "same", rng) for k in kernels]
        self.branches = branches
        self.kernels = tuple(br.params["W"].shape[2] for br in branches)
        self._sync()

    def _sync(self):
        self.params = {}
        for k, br in zip(self.kernels, self.branches):
            self.params[f"W{k}"] = br.params["W"]
            self.params[f"b{k}"] = br.params["b"]

    def hyper(self):
        return [float(k) for k in self.kernels]

    @classmethod
    def build(cls, hyper, params):
        branches = [Conv2D(W=params[f"W{int(k)}"], b=params[f"b{int(k)}"]) for k in hyper]
        return cls(branches=branches)

    def forward(self, x):
        # branches read this layer's arrays so in-place updates and dtype casts reach them
        for k, br in zip(self.kernels, self.branches):
            br.name = f"{self.name}[{k}x{k}]"
            br.params = {"W": self.params[f"W{k}"], "b": self.params[f"b{k}"]}
        outs = [br.forward(x) for br in self.branches]
        self._cache = [o.shape[1] for o in outs]
        return np.concatenate(outs, axis=1)

    def backward(self, dy):
        sizes = self._need_cache()
        dx = None
        self.grads = {}
        start = 0
        for k, br, c in zip(self.kernels, self.branches, sizes):
            d = br.backward(dy[:, start:start + c])
            start += c
            dx = d if dx is None else dx + d
            self.grads[f"W{k}"] = br.grads["W"]
            self.grads[f"b{k}"] = br.grads["b"]
        return dx


class MaxPool2D(Layer):
    kind = "maxpool"

    def __init__(self, pool: int = 2):
        super().__init__()
        self.pool = int(pool)

    def hyper(self):
        return [float(self.pool)]

    @classmethod
    def build(cls, hyper, params):
        return cls(int(hyper[0]))

    def forward(self, x):
        p = self.pool
        if x.ndim != 4 or x.shape[2] < p or x.shape[3] < p:
            raise self._shape_error(f"cannot {p}x{p}-pool input of shape {x.shape}")
        N, C, H, W = x.shape
        Ho, Wo = H // p, W // p
        blocks = x[:, :, :Ho * p, :Wo * p].reshape(N, C, Ho, p, Wo, p).transpose(0, 1, 2, 4, 3, 5)
        blocks = blocks.reshape(N, C, Ho, Wo, p * p)
        arg = np.argmax(blocks, axis=-1)
        self._cache = (x.shape, arg)
        return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        shape, arg = self._need_cache()
        p = self.pool
        N, C, H, W = shape
        Ho, Wo = dy.shape[2], dy.shape[3]
        blocks = np.zeros((N, C, Ho, Wo, p * p))
        np.put_along_axis(blocks, arg[..., None], dy[..., None], axis=-1)
        blocks = blocks.reshape(N, C, Ho, Wo, p, p).transpose(0, 1, 2, 4, 3, 5).reshape(N, C, Ho * p, Wo * p)
        dx = np.zeros(shape)
        dx[:, :, :Ho * p, :Wo * p] = blocks
        return dx


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._need_cache())


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        self._cache = x > 0
        return np.where(self._cache, x, 0.0)

    def backward(self, dy):
        return np.where(self._need_cache(), dy, 0.0)


class LeakyReLU(Layer):
    kind = "leaky-relu"

    def __init__(self, slope: float = 0.2):
        super().__init__()
        # held at float32 precision so checkpoints reproduce it exactly
        self.slope = float(np.float32(slope))

    def hyper(self):
        return [self.slope]

    @classmethod
    def build(cls, hyper, params):
        return cls(hyper[0])

    def forward(self, x):
        self._cache = x > 0
        return np.where(self._cache, x, self.slope * x)

    def backward(self, dy):
        return np.where(self._need_cache(), dy, self.slope * dy)


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x):
        # split form avoids overflow in exp for large |x|
        e = np.exp(-np.abs(x))
        y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        self._cache = y
        return y

    def backward(self, dy):
        y = self._need_cache()
        return dy * y * (1.0 - y)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x):
        y = softmax(x)
        self._cache = y
        return y

    def backward(self, dy):
        y = self._need_cache()
        return y * (dy - (dy * y).sum(axis=-1, keepdims=True))


class RBF(Layer):
    """Gaussian radial-basis layer followed by an affine readout.

    ``h_j = exp(-|f - v_j|^2 / (2 sigma_j^2))`` and ``y_i = c0_i + sum_j C_ji h_j``.
    Parameters: centers ``V`` (q, d), widths ``sigma`` (q,), weights ``C`` (q, X),
    biases ``c0`` (X,).
    """

    kind = "rbf"
    min_sigma = 1e-6

    def __init__(self, d: int = 1, q: int = 1, n_out: int = 1, rng: np.random.Generator | None = None,
                 V=None, sigma=None, C=None, c0=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        V = rng.standard_normal((q, d)) if V is None else np.asarray(V, dtype=np.float64)
        if sigma is None:
            sigma = np.full(V.shape[0], mean_pairwise_distance(V))
        C = _uniform(rng, V.shape[0], (V.shape[0], n_out)) if C is None else np.asarray(C, dtype=np.float64)
        c0 = np.zeros(C.shape[1]) if c0 is None else np.asarray(c0, dtype=np.float64)
        self.params = {"V": V, "sigma": np.asarray(sigma, dtype=np.float64).copy(), "C": C, "c0": c0}

    @classmethod
    def build(cls, hyper, params):
        return cls(V=params["V"], sigma=params["sigma"], C=params["C"], c0=params["c0"])

    def hidden(self, x: np.ndarray) -> np.ndarray:
        V, sigma = self.params["V"], self.params["sigma"]
        if np.any(sigma <= 0):
            raise InvalidParameterError(f"layer {self.name}: RBF widths must be positive")
        if x.ndim != 2 or x.shape[1] != V.shape[1]:
            raise self._shape_error(f"expected (N, {V.shape[1]}) input, got {x.shape}")
        diff = x[:, None, :] - V[None, :, :]
        r2 = np.einsum("nqd,nqd->nq", diff, diff)
        h = np.exp(-r2 / (2.0 * sigma ** 2))
        return diff, r2, h

    def forward(self, x):
        diff, r2, h = self.hidden(x)
        self._cache = (diff, r2, h)
        return h @ self.params["C"] + self.params["c0"]

    def backward(self, dy):
        diff, r2, h = self._need_cache()
        sigma = self.params["sigma"]
        dh = dy @ self.params["C"].T
        g = dh * h                                  # dL/d(-r2/(2 s^2)) per (n, q)
        dr2 = -g / (2.0 * sigma ** 2)
        self.grads = {
            "C": h.T @ dy,
            "c0": dy.sum(axis=0),
            "sigma": (g * r2).sum(axis=0) / sigma ** 3,
            "V": -2.0 * np.einsum("nq,nqd->qd", dr2, diff),
        }
        return 2.0 * np.einsum("nq,nqd->nd", dr2, diff)

    def constrain(self):
        np.maximum(self.params["sigma"], self.min_sigma, out=self.params["sigma"])


def mean_pairwise_distance(V: np.ndarray) -> float:
    q = V.shape[0]
    if q < 2:
        return 1.0
    d = np.sqrt(((V[:, None, :] - V[None, :, :]) ** 2).sum(-1))
    m = d[np.triu_indices(q, 1)].mean()
    return float(m) if m > 0 else 1.0


LAYER_KINDS: dict[str, type[Layer]] = {cls.kind: cls for cls in (
    Dense, Conv2D, MultiScaleConv, MaxPool2D, Flatten, ReLU, LeakyReLU, Sigmoid, Softmax, RBF)}


def layer_class(kind: str) -> type[Layer]:
    try:
        return LAYER_KINDS[kind]
    except KeyError:
        raise UnsupportedLayerError(f"unsupported layer kind {kind!r}") from None


def rbf_forward(V: np.ndarray, sigma: np.ndarray, C: np.ndarray, c0: np.ndarray,
                f: np.ndarray) -> np.ndarray:
    """Affine RBF readout for a single feature vector ``f`` (or a batch of them)."""
    f = np.asarray(f, dtype=np.float64)
    layer = RBF(V=V, sigma=sigma, C=C, c0=c0)
    out = layer.forward(f[None, :] if f.ndim == 1 else f)
    return out[0] if f.ndim == 1 else out
