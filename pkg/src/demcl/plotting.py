"""Figures for run reports, rendered straight to image files."""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .fileio import atomic_write  # noqa: E402


def _save(fig, path) -> Path:
    buf = io.BytesIO()
    fig.savefig(buf, format=Path(path).suffix.lstrip(".") or "png", dpi=110, bbox_inches="tight")
    plt.close(fig)
    atomic_write(path, buf.getvalue())
    return Path(path)


def plot_loss_curves(history: list[dict], path, title: str = "MCL loss") -> Path:
    """Train and (when present) test loss per epoch."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    epochs = [h["epoch"] for h in history]
    for key, label in (("loss_train", "train"), ("loss_test", "test")):
        ys = [h.get(key) for h in history]
        if any(y is not None for y in ys):
            ax.plot(epochs, ys, label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy")
    ax.set_yscale("log")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_gan_losses(history: list[dict], path, title: str = "RDGAN losses") -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    epochs = [h["epoch"] for h in history]
    for key, label in (("loss_g", "G"), ("loss_ds", "D_s"), ("loss_dt", "D_t")):
        ax.plot(epochs, [h[key] for h in history], label=label)
    ax.axhline(np.log(2.0), color="grey", lw=0.8, ls="--")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_confusion(confusion, path, title: str = "Confusion matrix") -> Path:
    cm = np.asarray(confusion)
    fig, ax = plt.subplots(figsize=(4, 3.5))
    im = ax.imshow(cm, cmap="Blues")
    for (i, j), v in np.ndenumerate(cm):
        ax.text(j, i, str(v), ha="center", va="center",
                color="white" if v > cm.max() / 2 else "black")
    ax.set_xlabel("decided class")
    ax.set_ylabel("true class")
    ax.set_xticks(range(cm.shape[1]))
    ax.set_yticks(range(cm.shape[0]))
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    return _save(fig, path)


def plot_per_class(per_class: list, path, title: str = "Per-class accuracy") -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3))
    vals = [np.nan if v is None else v for v in per_class]
    ax.bar(range(len(vals)), vals)
    ax.set_ylim(0, 1)
    ax.set_xlabel("class")
    ax.set_ylabel("accuracy")
    ax.set_xticks(range(len(vals)))
    ax.set_title(title)
    return _save(fig, path)


def plot_tds(columns: np.ndarray, path, frame_rate: float = 15.0, title: str = "Time-Doppler spectrogram") -> Path:
    E = np.asarray(columns)
    fig, ax = plt.subplots(figsize=(6, 3))
    im = ax.imshow(E.T, aspect="auto", origin="lower", extent=(0, E.shape[0] / frame_rate, 0, E.shape[1]))
    ax.set_xlabel("time (s)")
    ax.set_ylabel("Doppler bin")
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    return _save(fig, path)
