"""Multi-characteristic learning classifier.

Three networks see each sample:

* FN1, a multi-scale CNN on the TDS window, gives a class distribution ``p1``;
* FN2, an RBF network on the four gait features, gives ``p2``;
* CN, a dense network on the flattened window plus the features, gives a
  ``2X`` weight vector ``w``.

The fused score is ``P_i = p1_i * w_i + p2_i * w_{X+i}`` and the decision is
``argmax_i P_i`` (lowest index on ties).  All three networks are trained
jointly through the fusion.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, ShapeMismatchError
from .features import GaitFeatures
from .nn.checkpoint import load_entries, network_entries, network_from_entries, save_entries
from .nn.layers import RBF, Conv2D, Dense, Flatten, MaxPool2D, MultiScaleConv, ReLU, Softmax, softmax
from .nn.losses import EPS, one_hot
from .nn.network import Network

log = logging.getLogger(__name__)

ORIGINS = ("real", "generated")


@dataclass
class MclConfig:
    """Network sizes.  The defaults are the full-size model; :meth:`desk` is a small one."""

    n_classes: int = 5
    doppler_bins: int = 205
    window: int = 45
    n_features: int = 4
    branch_channels: int = 8
    kernels: tuple[int, ...] = (3, 4, 5)
    conv_channels: tuple[int, ...] = (48, 96, 128, 32)   # 3x3 convs, the last one 1x1
    dense_hidden: int = 128
    rbf_hidden: int = 5
    cn_hidden: tuple[int, ...] = (1000, 100)
    pool: int = 2

    def __post_init__(self):
        self.kernels = tuple(int(k) for k in self.kernels)
        self.conv_channels = tuple(int(c) for c in self.conv_channels)
        self.cn_hidden = tuple(int(c) for c in self.cn_hidden)
        if self.n_classes < 2:
            raise InvalidConfigError("at least two classes are required")
        if min(self.doppler_bins, self.window, self.n_features, self.branch_channels,
               self.dense_hidden, self.rbf_hidden, self.pool) < 1:
            raise InvalidConfigError("MCL sizes must be positive")
        if not self.conv_channels or min(self.conv_channels) < 1 or min(self.cn_hidden, default=1) < 1:
            raise InvalidConfigError("MCL channel counts must be positive")

    @classmethod
    def desk(cls, n_classes: int = 3, doppler_bins: int = 32, window: int = 45) -> "MclConfig":
        return cls(n_classes=n_classes, doppler_bins=doppler_bins, window=window, branch_channels=4,
                   conv_channels=(8, 16, 16, 8), dense_hidden=32, cn_hidden=(64, 16))

    @property
    def cn_inputs(self) -> int:
        return self.window * self.doppler_bins + self.n_features


OBJECTIVES = ("renormalized", "softmax")


@dataclass
class TrainConfig:
    epochs: int = 500
    lr: float = 0.0005
    batch_size: int = 64
    seed: int = 0
    # how fused scores become a distribution for the cross-entropy, see fused_loss
    objective: str = "renormalized"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidConfigError("epochs and batch size must be >= 1")
        if not self.lr > 0:
            raise InvalidConfigError("learning rate must be positive")
        if self.objective not in OBJECTIVES:
            raise InvalidConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")


@dataclass
class MclSample:
    tds_window: np.ndarray
    features: GaitFeatures | np.ndarray
    label: int
    origin: str = "real"


@dataclass
class MclDataset:
    """Stacked samples: windows ``(N, window, D)``, features ``(N, 4)``, labels ``(N,)``."""

    windows: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    generated: np.ndarray = None

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float64)
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.generated is None:
            self.generated = np.zeros(self.labels.shape, dtype=bool)
        self.generated = np.asarray(self.generated, dtype=bool)
        n = self.labels.shape[0]
        if (self.windows.ndim != 3 or self.features.ndim != 2 or self.windows.shape[0] != n
                or self.features.shape[0] != n or self.generated.shape != (n,)):
            raise ShapeMismatchError("dataset arrays disagree on the sample count or rank")

    def __len__(self):
        return int(self.labels.shape[0])

    @classmethod
    def from_samples(cls, samples: list[MclSample]) -> "MclDataset":
        if not samples:
            raise InvalidInputError("no samples")
        for s in samples:
            if s.origin not in ORIGINS:
                raise InvalidInputError(f"sample origin must be one of {ORIGINS}, got {s.origin!r}")
        feats = [s.features.as_array() if isinstance(s.features, GaitFeatures) else s.features
                 for s in samples]
        return cls(np.stack([np.asarray(s.tds_window) for s in samples]), np.stack(feats),
                   np.array([s.label for s in samples]), np.array([s.origin == "generated" for s in samples]))

    def subset(self, idx) -> "MclDataset":
        return MclDataset(self.windows[idx], self.features[idx], self.labels[idx], self.generated[idx])

    @staticmethod
    def concat(*parts: "MclDataset") -> "MclDataset":
        parts = [p for p in parts if p is not None and len(p)]
        return MclDataset(np.concatenate([p.windows for p in parts]),
                          np.concatenate([p.features for p in parts]),
                          np.concatenate([p.labels for p in parts]),
                          np.concatenate([p.generated for p in parts]))


def build_fn1(cfg: MclConfig, rng: np.random.Generator) -> Network:
    """Multi-scale CNN; pools only while both spatial dims are at least the pool size."""
    H, W = cfg.window, cfg.doppler_bins
    p = cfg.pool
    c = cfg.branch_channels * len(cfg.kernels)
    layers = [MultiScaleConv(1, cfg.branch_channels, cfg.kernels, rng), ReLU()]

    def maybe_pool():
        nonlocal H, W
        if H >= p and W >= p and p > 1:
            layers.append(MaxPool2D(p))
            H, W = H // p, W // p

    maybe_pool()
    *ladder, last = cfg.conv_channels
    for ch in ladder:
        layers += [Conv2D(c, ch, 3, 1, "same", rng), ReLU()]
        c = ch
        maybe_pool()
    layers += [Conv2D(c, last, 1, 1, "same", rng), ReLU(), Flatten(),
               Dense(last * H * W, cfg.dense_hidden, rng), ReLU(),
               Dense(cfg.dense_hidden, cfg.n_classes, rng), Softmax()]
    return Network(layers, input_shape=(1, cfg.window, cfg.doppler_bins), name="fn1")


def build_fn2(cfg: MclConfig, rng: np.random.Generator, centers: np.ndarray | None = None) -> Network:
    rbf = RBF(cfg.n_features, cfg.rbf_hidden, cfg.n_classes, rng, V=centers)
    return Network([rbf, Softmax()], input_shape=(cfg.n_features,), name="fn2")


def build_cn(cfg: MclConfig, rng: np.random.Generator) -> Network:
    sizes = (cfg.cn_inputs, *cfg.cn_hidden)
    layers = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        layers += [Dense(a, b, rng), ReLU()]
    layers += [Dense(sizes[-1], 2 * cfg.n_classes, rng), Softmax()]
    return Network(layers, input_shape=(cfg.cn_inputs,), name="cn")


@dataclass
class InputScaling:
    """Standardization applied before the networks: one scalar for TDS values, per-feature for features."""

    tds_mean: float = 0.0
    tds_std: float = 1.0
    feat_mean: np.ndarray = field(default_factory=lambda: np.zeros(4))
    feat_std: np.ndarray = field(default_factory=lambda: np.ones(4))

    @classmethod
    def fit(cls, data: MclDataset) -> "InputScaling":
        ts = float(data.windows.std())
        fs = data.features.std(axis=0)
        return cls(float(data.windows.mean()), ts if ts > 0 else 1.0,
                   data.features.mean(axis=0), np.where(fs > 0, fs, 1.0))

    def round_to_float32(self):
        self.tds_mean = float(np.float32(self.tds_mean))
        self.tds_std = float(np.float32(self.tds_std))
        self.feat_mean = np.asarray(self.feat_mean, np.float32).astype(np.float64)
        self.feat_std = np.asarray(self.feat_std, np.float32).astype(np.float64)


class MclModel:
    def __init__(self, cfg: MclConfig, fn1: Network, fn2: Network, cn: Network,
                 scaling: InputScaling | None = None):
        self.cfg, self.fn1, self.fn2, self.cn = cfg, fn1, fn2, cn
        self.scaling = scaling or InputScaling(feat_mean=np.zeros(cfg.n_features),
                                               feat_std=np.ones(cfg.n_features))

    @classmethod
    def init(cls, cfg: MclConfig, seed: int = 0, centers: np.ndarray | None = None) -> "MclModel":
        rng = np.random.default_rng(seed)
        return cls(cfg, build_fn1(cfg, rng), build_fn2(cfg, rng, centers), build_cn(cfg, rng))

    @property
    def networks(self) -> tuple[Network, Network, Network]:
        return self.fn1, self.fn2, self.cn

    def _windows(self, windows) -> np.ndarray:
        w = np.asarray(windows, dtype=np.float64)
        if w.ndim == 2:
            w = w[None]
        shape = (self.cfg.window, self.cfg.doppler_bins)
        if w.ndim != 3 or w.shape[1:] != shape:
            raise ShapeMismatchError(f"TDS windows must be {shape}, got {w.shape[-2:]}")
        return ((w - self.scaling.tds_mean) / self.scaling.tds_std)[:, None]

    def _features(self, feats) -> np.ndarray:
        f = feats.as_array() if isinstance(feats, GaitFeatures) else np.asarray(feats, dtype=np.float64)
        if f.ndim == 1:
            f = f[None]
        if f.ndim != 2 or f.shape[1] != self.cfg.n_features:
            raise ShapeMismatchError(f"expected {self.cfg.n_features} features per sample, got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise InvalidInputError("features must be finite")
        return (f - self.scaling.feat_mean) / self.scaling.feat_std

    def forward(self, windows, feats):
        """``(p1, p2, w, P)`` for a batch."""
        xt = self._windows(windows)
        xf = self._features(feats)
        if xt.shape[0] != xf.shape[0]:
            raise ShapeMismatchError("window and feature batches differ in length")
        p1 = self.fn1(xt)
        p2 = self.fn2(xf)
        w = self.cn(np.concatenate([xt.reshape(xt.shape[0], -1), xf], axis=1))
        return p1, p2, w, fuse(p1, p2, w)

    def predict(self, windows, feats) -> np.ndarray:
        return decide(self.forward(windows, feats)[3])

    def entries(self) -> dict[str, np.ndarray]:
        out = {}
        for net in self.networks:
            out.update(network_entries(net))
        s = self.scaling
        out["norm/tds"] = np.array([s.tds_mean, s.tds_std])
        out["norm/feat_mean"] = np.asarray(s.feat_mean)
        out["norm/feat_std"] = np.asarray(s.feat_std)
        cfg = json.dumps(asdict(self.cfg), sort_keys=True).encode()
        out["meta/config"] = np.frombuffer(cfg, dtype=np.uint8).astype(np.float64)
        return out

    def save(self, path):
        save_entries(self.entries(), path)

    @classmethod
    def load(cls, path) -> "MclModel":
        e = load_entries(path)
        cfg = MclConfig(**json.loads(bytes(e["meta/config"].astype(np.uint8)).decode()))
        fn1 = network_from_entries(e, "fn1", (1, cfg.window, cfg.doppler_bins))
        fn2 = network_from_entries(e, "fn2", (cfg.n_features,))
        cn = network_from_entries(e, "cn", (cfg.cn_inputs,))
        tm, ts = (float(v) for v in e["norm/tds"])
        scaling = InputScaling(tm, ts, e["norm/feat_mean"].astype(np.float64),
                               e["norm/feat_std"].astype(np.float64))
        return cls(cfg, fn1, fn2, cn, scaling)


def fn1_forward(model: MclModel, tds_window) -> np.ndarray:
    return model.fn1(model._windows(tds_window))


def fn2_forward(model: MclModel, features) -> np.ndarray:
    return model.fn2(model._features(features))


def cn_forward(model: MclModel, tds_window, features) -> np.ndarray:
    xt = model._windows(tds_window)
    xf = model._features(features)
    return model.cn(np.concatenate([xt.reshape(xt.shape[0], -1), xf], axis=1))


def fuse(p1, p2, w) -> np.ndarray:
    """``P_i = p1_i * w_i + p2_i * w_{X+i}``; works on single vectors or batches."""
    p1, p2, w = (np.asarray(a, dtype=np.float64) for a in (p1, p2, w))
    X = p1.shape[-1]
    if p2.shape != p1.shape or w.shape[:-1] != p1.shape[:-1] or w.shape[-1] != 2 * X:
        raise ShapeMismatchError(f"fusion needs lengths X, X, 2X; got {p1.shape}, {p2.shape}, {w.shape}")
    return p1 * w[..., :X] + p2 * w[..., X:]


def decide(P) -> np.ndarray:
    """Index of the largest fused score; ties go to the lowest class index."""
    return np.argmax(np.asarray(P), axis=-1)


def fused_loss(labels, P, objective: str = "renormalized") -> tuple[float, np.ndarray]:
    """Mean cross-entropy of the labels against a distribution made from ``P``, and its gradient in ``P``.

    ``renormalized`` uses ``P / sum(P)``; ``softmax`` uses ``softmax(P)``.
    Since every ``P_i`` lies in ``[0, 1]``, the softmax form can never drop
    below ``ln(1 + (X - 1) / e)``, about 0.55 for three classes.
    """
    P = np.asarray(P, dtype=np.float64)
    Y = one_hot(labels, P.shape[1])
    n = P.shape[0]
    if objective == "softmax":
        Q = softmax(P)
        loss = float(-(Y * np.log(np.maximum(Q, EPS))).sum() / n)
        return loss, (Q - Y) / n
    if objective != "renormalized":
        raise InvalidConfigError(f"unknown objective {objective!r}")
    s = np.maximum(P.sum(axis=1, keepdims=True), EPS)
    Q = np.maximum(P / s, EPS)
    loss = float(-(Y * np.log(Q)).sum() / n)
    g = -Y / Q                                  # dL/dQ per sample, before the 1/n
    dP = (g - (g * Q).sum(axis=1, keepdims=True)) / s / n
    return loss, dP


def fusion_backward(dP, p1, p2, w):
    """Gradients of the fused scores with respect to ``p1``, ``p2`` and ``w``."""
    X = p1.shape[1]
    return dP * w[:, :X], dP * w[:, X:], np.concatenate([dP * p1, dP * p2], axis=1)


def train_step(model: MclModel, windows, feats, labels, lr: float, objective: str = "renormalized") -> float:
    p1, p2, w, P = model.forward(windows, feats)
    loss, dP = fused_loss(labels, P, objective)
    d1, d2, dw = fusion_backward(dP, p1, p2, w)
    model.fn1.backward(d1)
    model.fn2.backward(d2)
    model.cn.backward(dw)
    for net in model.networks:
        net.step(lr)
    return loss


def dataset_loss(model: MclModel, data: MclDataset, objective: str = "renormalized",
                 batch_size: int = 256) -> float:
    total = 0.0
    for i in range(0, len(data), batch_size):
        sl = slice(i, i + batch_size)
        P = model.forward(data.windows[sl], data.features[sl])[3]
        total += fused_loss(data.labels[sl], P, objective)[0] * P.shape[0]
    return total / len(data)


def _check_labels(data: MclDataset, n_classes: int):
    if len(data) == 0:
        raise InvalidInputError("empty dataset")
    if data.labels.min() < 0 or data.labels.max() >= n_classes:
        raise InvalidInputError(f"labels must lie in [0, {n_classes})")


def train_mcl(train: MclDataset, cfg: MclConfig, tcfg: TrainConfig | None = None,
              test: MclDataset | None = None) -> tuple[MclModel, list[dict]]:
    """Jointly train FN1, FN2 (centers and widths included) and CN with mini-batch SGD.

    The history has one entry per epoch: the size-weighted mean of the
    pre-update batch losses and, when ``test`` is given, the test loss after
    the epoch.
    """
    tcfg = tcfg or TrainConfig()
    _check_labels(train, cfg.n_classes)
    if np.unique(train.labels).size < 2:
        raise InvalidInputError("training data must contain at least two classes")
    if test is not None:
        _check_labels(test, cfg.n_classes)
    scaling = InputScaling.fit(train)
    rng = np.random.default_rng(tcfg.seed)
    xf = (train.features - scaling.feat_mean) / scaling.feat_std
    pick = rng.choice(len(train), size=cfg.rbf_hidden, replace=len(train) < cfg.rbf_hidden)
    model = MclModel.init(cfg, int(rng.integers(2**31)), centers=xf[pick].copy())
    model.scaling = scaling
    history = []
    for epoch in range(1, tcfg.epochs + 1):
        order = rng.permutation(len(train))
        total = 0.0
        for i in range(0, order.size, tcfg.batch_size):
            b = order[i:i + tcfg.batch_size]
            total += train_step(model, train.windows[b], train.features[b], train.labels[b], tcfg.lr,
                                tcfg.objective) * b.size
        entry = {"epoch": epoch, "loss_train": total / len(train)}
        if test is not None:
            entry["loss_test"] = dataset_loss(model, test, tcfg.objective)
        history.append(entry)
        log.debug("mcl epoch %d: %s", epoch, entry)
    for net in model.networks:
        net.round_to_float32()
    model.scaling.round_to_float32()
    return model, history


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def metrics_from_predictions(y_true, y_pred, n_classes: int) -> dict:
    cm = confusion_matrix(y_true, y_pred, n_classes)
    rows = cm.sum(axis=1)
    total = int(cm.sum())
    if total == 0:
        raise InvalidInputError("cannot evaluate on an empty test set")
    per_class = [float(cm[i, i] / rows[i]) if rows[i] else None for i in range(n_classes)]
    return {"accuracy": float(np.trace(cm) / total), "confusion": cm.tolist(), "per_class": per_class,
            "n_samples": total}


def evaluate(model: MclModel, data: MclDataset, batch_size: int = 256) -> dict:
    """Accuracy, confusion counts (rows true class, columns decision) and per-class accuracy."""
    _check_labels(data, model.cfg.n_classes)
    preds = np.concatenate([model.predict(data.windows[i:i + batch_size], data.features[i:i + batch_size])
                            for i in range(0, len(data), batch_size)])
    return metrics_from_predictions(data.labels, preds, model.cfg.n_classes)
