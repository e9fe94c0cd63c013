"""Range-Doppler GAN for data enhancement.

The generator is a fully convolutional next-frame predictor ``G(x^t) ~ x^{t+1}``.
A spatial discriminator judges ``(x^t, candidate)`` pairs stacked as two
channels, and a temporal discriminator judges three consecutive frames
stacked as three channels.  Frames are RDMs affinely mapped to ``[0, 1]``.

For frames ``x^0 .. x^{n-1}`` training uses every ``t`` with ``1 <= t <= n-3``
so that ``x^{t-1}``, ``x^{t+1}`` and ``y^{t+1} = x^{t+2}`` exist.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, ShapeMismatchError
from .fileio import atomic_write
from .nn.checkpoint import load_entries, network_entries, network_from_entries, save_entries
from .nn.layers import Conv2D, Dense, Flatten, LeakyReLU, MaxPool2D, Sigmoid
from .nn.losses import bce_terms
from .nn.network import Network

log = logging.getLogger(__name__)

LN2 = float(np.log(2.0))


@dataclass
class GanTrainConfig:
    k_ds: int = 1
    k_dt: int = 1
    k_g: int = 1
    epochs: int = 100
    lr: float = 0.0005
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if min(self.k_ds, self.k_dt, self.k_g, self.epochs, self.batch_size) < 1:
            raise InvalidConfigError("GAN iteration counts, epochs and batch size must be >= 1")
        if not self.lr > 0:
            raise InvalidConfigError("GAN learning rate must be positive")


@dataclass
class Normalizer:
    """Affine map of dB values onto ``[0, 1]``."""

    lo: float
    hi: float

    @classmethod
    def fit(cls, frames: np.ndarray) -> "Normalizer":
        # bounds held at float32 precision so a checkpoint reproduces them exactly
        lo, hi = float(np.float32(np.min(frames))), float(np.float32(np.max(frames)))
        return cls(lo, hi if hi > lo else lo + 1.0)

    def __call__(self, x):
        return (np.asarray(x, dtype=np.float64) - self.lo) / (self.hi - self.lo)

    def inverse(self, y):
        return np.asarray(y, dtype=np.float64) * (self.hi - self.lo) + self.lo


def build_generator(rng: np.random.Generator, channels=(1, 32, 8, 1), kernel: int = 3) -> Network:
    layers = []
    for i, (a, b) in enumerate(zip(channels[:-1], channels[1:])):
        layers.append(Conv2D(a, b, kernel, 1, "same", rng))
        if i < len(channels) - 2:
            layers.append(LeakyReLU(0.2))
    return Network(layers, name="g")


def build_discriminator(shape: tuple[int, int], rng: np.random.Generator, channels=(2, 8, 16),
                        kernel: int = 3, name: str = "ds") -> Network:
    """Conv stack with 2x2 max-pool after each conv, then a dense sigmoid head sized from the actual shape."""
    H, W = shape
    layers = []
    for a, b in zip(channels[:-1], channels[1:]):
        layers += [Conv2D(a, b, kernel, 1, "same", rng), LeakyReLU(0.2)]
        if H >= 2 and W >= 2:
            layers.append(MaxPool2D(2))
            H, W = H // 2, W // 2
    layers += [Flatten(), Dense(channels[-1] * H * W, 1, rng), Sigmoid()]
    return Network(layers, input_shape=(channels[0],) + tuple(shape), name=name)


def _as_batch(x: np.ndarray) -> np.ndarray:
    """``(m, H, W)`` or ``(H, W)`` frames to ``(m, 1, H, W)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim == 3:
        x = x[:, None]
    if x.ndim != 4:
        raise ShapeMismatchError(f"frames must be (m, H, W), got shape {x.shape}")
    return x


def g_predict(g: Network, x_t: np.ndarray) -> np.ndarray:
    """Predicted next frame(s), same shape as the input."""
    x = np.asarray(x_t, dtype=np.float64)
    y = g.forward(_as_batch(x))
    if y.shape[2:] != _as_batch(x).shape[2:]:
        raise ShapeMismatchError(f"generator changed the frame shape {x.shape} -> {y.shape}")
    return y.reshape(x.shape)


def discriminator_loss(d_real: np.ndarray, d_fake: np.ndarray) -> float:
    """``(-mean log d_real - mean log(1 - d_fake)) / 2`` with EPS-floored logs."""
    return bce_terms(np.asarray(d_real, float), np.asarray(d_fake, float))[0]


def generator_loss(d_s_fake: np.ndarray, d_t_fake: np.ndarray) -> float:
    """``(-mean log D_s(x, G(x)) - mean log D_t(G~(X~))) / 2``."""
    a = bce_terms(None, np.asarray(d_s_fake, float), fake_target=1.0)[0]
    b = bce_terms(None, np.asarray(d_t_fake, float), fake_target=1.0)[0]
    return a + b


def _stack(*frames) -> np.ndarray:
    return np.concatenate([_as_batch(f) for f in frames], axis=1)


def ds_loss(d_s: Network, x_t, y_t, g_x_t) -> float:
    return discriminator_loss(d_s(_stack(x_t, y_t)), d_s(_stack(x_t, g_x_t)))


def dt_loss(d_t: Network, y_triple, g_triple) -> float:
    """Triples are sequences of three frame batches ``(prev, cur, next)``."""
    return discriminator_loss(d_t(_stack(*y_triple)), d_t(_stack(*g_triple)))


def g_loss(d_s: Network, d_t: Network, g: Network, x_t, x_triple) -> float:
    gx = g_predict(g, x_t)
    g_triple = [g_predict(g, x) for x in x_triple]
    return generator_loss(d_s(_stack(x_t, gx)), d_t(_stack(*g_triple)))


@dataclass
class RdGan:
    g: Network
    ds: Network
    dt: Network
    normalizer: Normalizer
    label: int = -1
    history: list[dict] = field(default_factory=list)
    updates: dict[str, int] = field(default_factory=lambda: {"ds": 0, "dt": 0, "g": 0})

    @property
    def frame_shape(self) -> tuple[int, int]:
        return tuple(self.ds.input_shape[1:])

    def generate(self, seed_frames_db: np.ndarray, mode: str = "one-step", depth: int = 1) -> np.ndarray:
        """Generated dB frames, see :func:`generate_rdm_sequence`."""
        x = self.normalizer(seed_frames_db)
        return self.normalizer.inverse(generate_rdm_sequence(self.g, x, mode, depth))

    def entries(self) -> dict[str, np.ndarray]:
        out = {}
        for net in (self.g, self.ds, self.dt):
            out.update(network_entries(net))
        out["norm/range"] = np.array([self.normalizer.lo, self.normalizer.hi])
        out["meta/label"] = np.array([self.label], dtype=np.float64)
        out["meta/frame_shape"] = np.array(self.frame_shape, dtype=np.float64)
        return out

    def save(self, path):
        save_entries(self.entries(), path)

    @classmethod
    def load(cls, path) -> "RdGan":
        e = load_entries(path)
        shape = tuple(int(v) for v in e["meta/frame_shape"])
        g = network_from_entries(e, "g")
        ds = network_from_entries(e, "ds", input_shape=(2,) + shape)
        dt = network_from_entries(e, "dt", input_shape=(3,) + shape)
        lo, hi = (float(v) for v in e["norm/range"])
        return cls(g, ds, dt, Normalizer(lo, hi), int(e["meta/label"][0]))

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "loss_g", "loss_ds", "loss_dt"])
        for h in self.history:
            w.writerow([h["epoch"], repr(h["loss_g"]), repr(h["loss_ds"]), repr(h["loss_dt"])])
        return buf.getvalue()

    def save_history(self, path):
        atomic_write(path, self.history_csv())


def init_gan(frame_shape: tuple[int, int], seed: int = 0) -> tuple[Network, Network, Network]:
    rng = np.random.default_rng(seed)
    return (build_generator(rng),
            build_discriminator(frame_shape, rng, (2, 8, 16), name="ds"),
            build_discriminator(frame_shape, rng, (3, 8, 16), name="dt"))


def _update_ds(gan: RdGan, X: np.ndarray, t: np.ndarray, lr: float) -> float:
    x, y = X[t], X[t + 1]
    gx = gan.g.forward(x)
    m = len(t)
    out = gan.ds.forward(np.concatenate([np.concatenate([x, y], 1), np.concatenate([x, gx], 1)]))
    loss, g_real, g_fake = bce_terms(out[:m], out[m:])
    gan.ds.backward(np.concatenate([g_real, g_fake]))
    gan.ds.step(lr)
    return loss


def _update_dt(gan: RdGan, X: np.ndarray, t: np.ndarray, lr: float) -> float:
    m = len(t)
    gout = gan.g.forward(np.concatenate([X[t - 1], X[t], X[t + 1]]))
    fake = np.concatenate([gout[:m], gout[m:2 * m], gout[2 * m:]], 1)
    real = np.concatenate([X[t], X[t + 1], X[t + 2]], 1)
    out = gan.dt.forward(np.concatenate([real, fake]))
    loss, g_real, g_fake = bce_terms(out[:m], out[m:])
    gan.dt.backward(np.concatenate([g_real, g_fake]))
    gan.dt.step(lr)
    return loss


def _update_g(gan: RdGan, X: np.ndarray, t: np.ndarray, lr: float) -> float:
    m = len(t)
    gout = gan.g.forward(np.concatenate([X[t - 1], X[t], X[t + 1]]))
    g_prev, g_cur, g_next = gout[:m], gout[m:2 * m], gout[2 * m:]
    s_out = gan.ds.forward(np.concatenate([X[t], g_cur], 1))
    loss_s, _, gs = bce_terms(None, s_out, fake_target=1.0)
    ds_in = gan.ds.backward(gs)
    t_out = gan.dt.forward(np.concatenate([g_prev, g_cur, g_next], 1))
    loss_t, _, gt = bce_terms(None, t_out, fake_target=1.0)
    dt_in = gan.dt.backward(gt)
    dg = np.concatenate([dt_in[:, 0:1], dt_in[:, 1:2] + ds_in[:, 1:2], dt_in[:, 2:3]])
    gan.g.backward(dg)
    gan.g.step(lr)
    return loss_s + loss_t


def train_gan(frames_db: np.ndarray, cfg: GanTrainConfig | None = None, label: int = -1,
              normalizer: Normalizer | None = None, on_epoch=None) -> RdGan:
    """Train one RDGAN on an ordered ``(n, H, W)`` sequence of dB RDMs.

    Each epoch walks the valid ``t`` in seeded random mini-batches; per batch
    ``D_s`` is updated ``k_ds`` times, then ``D_t`` ``k_dt`` times, then ``G``
    ``k_g`` times.  The history holds the mean pre-update loss of each network.
    ``on_epoch(gan)`` is called after every epoch when given.
    """
    cfg = cfg or GanTrainConfig()
    frames_db = np.asarray(frames_db, dtype=np.float64)
    if frames_db.ndim != 3:
        raise InvalidInputError(f"frames must be (n, H, W), got shape {frames_db.shape}")
    n = frames_db.shape[0]
    if n < 4:
        raise InvalidInputError(f"RDGAN needs at least 4 consecutive frames, got {n}")
    normalizer = normalizer or Normalizer.fit(frames_db)
    X = normalizer(frames_db)[:, None]
    rng = np.random.default_rng(cfg.seed)
    g, ds, dt = init_gan(frames_db.shape[1:], cfg.seed)
    gan = RdGan(g, ds, dt, normalizer, label)
    ts = np.arange(1, n - 2)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(ts)
        sums = {"ds": 0.0, "dt": 0.0, "g": 0.0}
        batches = [order[i:i + cfg.batch_size] for i in range(0, order.size, cfg.batch_size)]
        for t in batches:
            for _ in range(cfg.k_ds):
                loss_ds = _update_ds(gan, X, t, cfg.lr)
                gan.updates["ds"] += 1
            for _ in range(cfg.k_dt):
                loss_dt = _update_dt(gan, X, t, cfg.lr)
                gan.updates["dt"] += 1
            for _ in range(cfg.k_g):
                loss_g = _update_g(gan, X, t, cfg.lr)
                gan.updates["g"] += 1
            sums["ds"] += loss_ds
            sums["dt"] += loss_dt
            sums["g"] += loss_g
        nb = len(batches)
        gan.history.append({"epoch": epoch, "loss_g": sums["g"] / nb,
                            "loss_ds": sums["ds"] / nb, "loss_dt": sums["dt"] / nb})
        log.debug("gan epoch %d: %s", epoch, gan.history[-1])
        if on_epoch is not None:
            on_epoch(gan)
    for net in (g, ds, dt):
        net.round_to_float32()
    return gan


def generate_rdm_sequence(g: Network, seed_frames: np.ndarray, mode: str = "one-step",
                          depth: int = 1) -> np.ndarray:
    """Generated normalized frames.

    ``one-step`` returns ``G(x)`` for every seed frame (``m`` outputs for ``m``
    seeds).  ``rollout`` starts from the last seed frame and feeds each
    prediction back in, returning ``depth`` frames.
    """
    seeds = np.asarray(seed_frames, dtype=np.float64)
    if seeds.ndim == 2:
        seeds = seeds[None]
    if seeds.ndim != 3 or seeds.shape[0] == 0:
        raise InvalidInputError("seed frames must be a non-empty (m, H, W) stack")
    if mode == "one-step":
        return g_predict(g, seeds)
    if mode == "rollout":
        if depth < 1:
            raise InvalidInputError(f"rollout depth must be >= 1, got {depth}")
        cur = seeds[-1]
        out = []
        for _ in range(depth):
            cur = g_predict(g, cur)
            out.append(cur)
        return np.stack(out)
    raise InvalidInputError(f"unknown generation mode {mode!r}")


def parse_mode(text: str) -> tuple[str, int]:
    """``"one-step"`` or ``"rollout:N"`` to ``(mode, depth)``."""
    if text == "one-step":
        return "one-step", 1
    if text.startswith("rollout:"):
        try:
            depth = int(text.split(":", 1)[1])
        except ValueError:
            raise InvalidInputError(f"bad rollout depth in {text!r}") from None
        return "rollout", depth
    raise InvalidInputError(f"unknown generation mode {text!r}")
