"""Run configuration: nested dataclasses stored as an INI file.

Every section maps to one dataclass; keys are its field names.  Tuples are
comma-separated, ``none`` stands for ``None``.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidConfigError
from .features import FeatureWindowConfig
from .mcl import MclConfig, TrainConfig
from .rdgan import GanTrainConfig
from .simkit import RadarParams


@dataclass
class SimulationConfig:
    duration: float = 60.0
    seed: int = 0
    n_classes: int = 3


@dataclass
class ProcessingSettings:
    denoise: bool = True
    denoise_percentile: float = 75.0
    denoise_margin_db: float = 6.0
    denoise_scope: str = "global"
    suppress_db: float = 30.0
    suppress_width: int = 1
    doppler_bins: int | None = None


@dataclass
class SampleConfig:
    width: int = 45
    stride: int = 5
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.width < 1 or self.stride < 1:
            raise InvalidConfigError("sample width and stride must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise InvalidConfigError("train_fraction must lie in (0, 1)")


@dataclass
class AugmentConfig:
    enabled: bool = False
    ratio: float = 0.8          # generated samples per real training sample
    mode: str = "one-step"
    gan_frames: int | None = 150    # leading training frames each GAN sees; none for all

    def __post_init__(self):
        if self.ratio < 0:
            raise InvalidConfigError("augmentation ratio must be >= 0")
        if self.gan_frames is not None and self.gan_frames < 4:
            raise InvalidConfigError("gan_frames must be >= 4")


def desk_radar() -> RadarParams:
    """16 range cells of 0.6 m and 32 Doppler bins of about 0.38 m/s."""
    return RadarParams(bandwidth_hz=0.25e9, K=16, L=32)


@dataclass
class PipelineConfig:
    radar: RadarParams = field(default_factory=desk_radar)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    processing: ProcessingSettings = field(default_factory=ProcessingSettings)
    features: FeatureWindowConfig = field(default_factory=FeatureWindowConfig)
    samples: SampleConfig = field(default_factory=SampleConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    gan: GanTrainConfig = field(default_factory=lambda: GanTrainConfig(epochs=20))
    mcl: MclConfig = field(default_factory=MclConfig.desk)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=40, lr=0.05, batch_size=32))

    def __post_init__(self):
        if self.features.Z < self.samples.width:
            raise InvalidConfigError(f"feature window Z={self.features.Z} is shorter than the sample width "
                                     f"{self.samples.width}")

    def to_ini(self) -> str:
        cp = _parser()
        for f in dataclasses.fields(self):
            section = getattr(self, f.name)
            cp[f.name] = {sf.name: _format(getattr(section, sf.name)) for sf in dataclasses.fields(section)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "PipelineConfig":
        cp = _parser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise InvalidConfigError(f"malformed config: {exc}") from exc
        base = cls()
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(cp.sections()) - known
        if unknown:
            raise InvalidConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        parts = {}
        for name in known:
            section = getattr(base, name)
            values = {}
            if cp.has_section(name):
                fields = {sf.name: sf for sf in dataclasses.fields(section)}
                for key, raw in cp[name].items():
                    if key not in fields:
                        raise InvalidConfigError(f"unknown key {name}.{key}")
                    values[key] = _parse(raw, getattr(section, key), f"{name}.{key}")
            parts[name] = dataclasses.replace(section, **values)
        return cls(**parts)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_ini(Path(path).read_text())


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str        # keep field names such as K, L and Z as written
    return cp


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, (tuple, list)):
        return ",".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(raw: str, default, key: str):
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if default is None:
            # ``None`` defaults are optional numbers
            return float(raw) if any(c in raw for c in ".eE") else int(raw)
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError:
        raise InvalidConfigError(f"bad value {raw!r} for {key}") from None
