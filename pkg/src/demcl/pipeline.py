"""End-to-end glue: frames to RDMs to TDS to samples, optional RDGAN augmentation, MCL training."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .errors import InvalidConfigError, InvalidInputError
from .features import features_for_samples
from .mcl import MclDataset, MclModel, evaluate, train_mcl
from .radarproc import (DenoiseConfig, ProcessingConfig, RadarFrame, TimeDopplerSpectrogram, build_tds,
                        doppler_profile, process_frame, window_starts)
from .rdgan import RdGan, train_gan
from .simkit import Recording, default_profiles, make_dataset

log = logging.getLogger(__name__)


def processing_config(cfg: PipelineConfig) -> ProcessingConfig:
    p = cfg.processing
    denoise = DenoiseConfig(p.denoise_percentile, p.denoise_margin_db, p.denoise_scope) if p.denoise else None
    return ProcessingConfig(denoise=denoise, suppress_db=p.suppress_db, suppress_width=p.suppress_width,
                            doppler_bins=p.doppler_bins)


def frames_to_rdms(frames: np.ndarray, proc: ProcessingConfig, frame_rate: float = 15.0) -> np.ndarray:
    """Processed dB RDMs ``(n, R, D)`` for complex frames ``(n, K, L)``."""
    return np.stack([process_frame(RadarFrame(f, i, frame_rate), proc).magnitude_db
                     for i, f in enumerate(frames)])


def rdms_to_tds(rdms: np.ndarray, frame_rate: float = 15.0) -> TimeDopplerSpectrogram:
    return build_tds([doppler_profile(m) for m in rdms], frame_rate, range_bins=rdms.shape[1])


@dataclass
class ClassData:
    """Processed data of one pedestrian, split into contiguous train and test blocks."""

    label: int
    rdms: np.ndarray
    n_train: int

    @property
    def train_rdms(self) -> np.ndarray:
        return self.rdms[:self.n_train]

    @property
    def test_rdms(self) -> np.ndarray:
        return self.rdms[self.n_train:]


def split_point(n: int, train_fraction: float) -> int:
    return int(np.floor(n * train_fraction))


def samples_from_rdms(rdms: np.ndarray, label: int, cfg: PipelineConfig, generated: bool = False,
                      count: int | None = None) -> MclDataset | None:
    """Windows of ``samples.width`` TDS columns plus gait features from a centered ``Z`` window.

    With ``count`` set, that many window starts are taken evenly across the block
    instead of every ``samples.stride`` columns.  Generated windows whose gait
    period is undefined are dropped; ``None`` is returned if none survive.
    """
    fr = cfg.radar.frame_rate
    tds = rdms_to_tds(rdms, fr)
    width = cfg.samples.width
    if count is None:
        starts = window_starts(tds.n, width, cfg.samples.stride)
    else:
        starts = sorted(set(np.linspace(0, tds.n - width, count).round().astype(int).tolist()))
    if not starts:
        raise InvalidInputError(f"block of {tds.n} frames is shorter than one {width}-column sample")
    feats = features_for_samples(tds, starts, cfg.features, width, skip_flat=generated)
    keep = [i for i, f in enumerate(feats) if f is not None]
    if len(keep) < len(starts):
        log.info("class %d: dropped %d of %d generated windows with an undefined gait period",
                 label, len(starts) - len(keep), len(starts))
    if not keep:
        return None
    windows = np.stack([tds.columns[starts[i]:starts[i] + width] for i in keep])
    return MclDataset(windows, np.stack([feats[i].as_array() for i in keep]), np.full(len(keep), label),
                      np.full(len(keep), generated))


def simulate_classes(cfg: PipelineConfig) -> list[Recording]:
    profiles = default_profiles(cfg.simulation.duration, cfg.simulation.seed)
    n = cfg.simulation.n_classes
    if not 2 <= n <= len(profiles):
        raise InvalidConfigError(f"the built-in simulator provides 2 to {len(profiles)} classes, got {n}")
    return make_dataset(profiles[:n], cfg.radar)


def prepare_classes(recordings: list[Recording], cfg: PipelineConfig) -> list[ClassData]:
    proc = processing_config(cfg)
    out = []
    for rec in recordings:
        rdms = frames_to_rdms(rec.frames, proc, cfg.radar.frame_rate)
        out.append(ClassData(rec.label, rdms, split_point(len(rdms), cfg.samples.train_fraction)))
    return out


def generated_samples(gan: RdGan, data: ClassData, n_real: int, cfg: PipelineConfig) -> MclDataset | None:
    """About ``ratio * n_real`` samples from frames the generator predicts over the training block."""
    count = int(round(cfg.augment.ratio * n_real))
    if count == 0:
        return None
    if cfg.augment.mode != "one-step":
        raise InvalidConfigError("pipeline augmentation supports the one-step mode only")
    fake = gan.generate(data.train_rdms[:-1], "one-step")
    return samples_from_rdms(fake, data.label, cfg, generated=True, count=count)


@dataclass
class RunResult:
    model: MclModel
    history: list[dict]
    metrics: dict
    gans: dict[int, RdGan] = field(default_factory=dict)
    train: MclDataset | None = None
    test: MclDataset | None = None


def run_pipeline(cfg: PipelineConfig, classes: list[ClassData] | None = None,
                 gans: dict[int, RdGan] | None = None) -> RunResult:
    """Train and evaluate one MCL model; ``classes`` and trained ``gans`` may be passed in to reuse them."""
    if classes is None:
        classes = prepare_classes(simulate_classes(cfg), cfg)
    gans = dict(gans or {})
    real, gen, test = [], [], []
    for data in classes:
        r = samples_from_rdms(data.train_rdms, data.label, cfg)
        real.append(r)
        test.append(samples_from_rdms(data.test_rdms, data.label, cfg))
        if cfg.augment.enabled:
            if data.label not in gans:
                log.info("training RDGAN for class %d", data.label)
                gans[data.label] = train_gan(data.train_rdms[:cfg.augment.gan_frames], cfg.gan,
                                             label=data.label)
            gen.append(generated_samples(gans[data.label], data, len(r), cfg))
    train = MclDataset.concat(*real, *gen)
    test_set = MclDataset.concat(*test)
    model, history = train_mcl(train, cfg.mcl, cfg.train, test_set)
    metrics = evaluate(model, test_set)
    metrics["loss_history"] = history
    metrics["n_train_real"] = int(sum(len(r) for r in real))
    metrics["n_train_generated"] = int(sum(len(g) for g in gen if g is not None))
    return RunResult(model, history, metrics, gans, train, test_set)


def metrics_json(metrics: dict) -> str:
    """Canonical JSON text: sorted keys, shortest round-trip floats, trailing newline."""
    return json.dumps(metrics, sort_keys=True, indent=2) + "\n"
