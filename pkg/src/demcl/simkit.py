"""Point-scatterer FMCW pedestrian simulator.

Signal model (dechirped, no range migration inside a frame)::

    s(k, l) = sum_i a_i * exp(j*2*pi*(fr_i*k/K + fd_i*l/L)) + n(k, l)

with the range bin ``fr = r / dr``, ``dr = c / (2*B)``, and the Doppler bin
``fd = (2*v/lambda) * Tc * L`` for chirp duration ``Tc``.  Positive ``v`` is
receding.  The unambiguous range is ``K * dr`` and the unambiguous velocity
``|v| < lambda / (4*Tc)``.

A pedestrian is three scatterers: a torso moving at constant radial speed and
two limbs whose velocities are ``v_torso + A*sin(2*pi*f_gait*t + phase)``
with phases ``+pi/4`` and ``-pi/4``.  The upper Doppler envelope then repeats
once per gait period ``1 / f_gait``.  Ranges advance with the integrated
velocity and wrap inside ``[range_min, range_max)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidConfigError, InvalidInputError
from .radarproc import RadarFrame

C = 299_792_458.0
LIMB_PHASES = (math.pi / 4, -math.pi / 4)


@dataclass(frozen=True)
class RadarParams:
    carrier_hz: float = 77e9
    bandwidth_hz: float = 1.0e9
    chirp_s: float = 1.6e-4
    K: int = 64
    L: int = 64
    frame_rate: float = 15.0
    snr_db: float = 25.0    # per-sample SNR for a unit-amplitude scatterer

    def __post_init__(self):
        for name in ("carrier_hz", "bandwidth_hz", "chirp_s", "K", "L", "frame_rate"):
            if not getattr(self, name) > 0:
                raise InvalidConfigError(f"radar parameter {name} must be positive")
        if self.frame_rate * self.L * self.chirp_s > 1.0:
            raise InvalidConfigError("chirps of one frame do not fit inside the frame period")

    @property
    def wavelength(self) -> float:
        return C / self.carrier_hz

    @property
    def range_resolution(self) -> float:
        return C / (2.0 * self.bandwidth_hz)

    @property
    def max_range(self) -> float:
        return self.K * self.range_resolution

    @property
    def velocity_resolution(self) -> float:
        """Radial velocity spanned by one Doppler bin (m/s)."""
        return self.wavelength / (2.0 * self.L * self.chirp_s)

    @property
    def max_velocity(self) -> float:
        return self.wavelength / (4.0 * self.chirp_s)

    def range_bin(self, r: float) -> float:
        return r / self.range_resolution

    def doppler_bin(self, v: float) -> float:
        """Signed Doppler bin offset from zero velocity (fractional)."""
        return v / self.velocity_resolution


@dataclass(frozen=True)
class Scatterer:
    range_m: float
    velocity: float
    amplitude: complex = 1.0


@dataclass
class PedestrianProfile:
    label: int
    base_range: float = 4.0
    torso_speed: float = 1.0
    gait_freq: float = 1.0
    limb_amplitude: float = 1.2
    reflectivity: tuple[float, float, float] = (1.0, 0.5, 0.35)
    duration: float = 60.0
    rng_seed: int = 0
    range_min: float = 1.0
    range_max: float = 9.0

    def __post_init__(self):
        if not 0.5 <= self.gait_freq <= 2.0:
            raise InvalidConfigError(f"gait frequency {self.gait_freq} Hz outside [0.5, 2.0]")
        if abs(self.torso_speed) >= 3.0 or abs(self.limb_amplitude) >= 3.0:
            raise InvalidConfigError("pedestrian speeds must stay below 3 m/s")
        if not self.range_min < self.range_max:
            raise InvalidConfigError("range_min must be below range_max")

    def _wrap(self, r: float) -> float:
        """Fold a range into ``[range_min, range_max)``."""
        out = self.range_min + (r - self.range_min) % (self.range_max - self.range_min)
        # float rounding can land exactly on the open upper bound
        return self.range_min if out >= self.range_max else out

    @property
    def gait_period(self) -> float:
        return 1.0 / self.gait_freq

    def scatterers(self, t: float) -> list[Scatterer]:
        """Scatterer states at time ``t`` seconds."""
        w = 2.0 * math.pi * self.gait_freq
        torso_r = self._wrap(self.base_range + self.torso_speed * t)
        out = [Scatterer(torso_r, self.torso_speed, self.reflectivity[0])]
        for amp, ph in zip(self.reflectivity[1:], LIMB_PHASES):
            v = self.torso_speed + self.limb_amplitude * math.sin(w * t + ph)
            # limb displacement relative to the torso, integral of the sinusoid
            dr = self.limb_amplitude / w * (math.cos(ph) - math.cos(w * t + ph))
            r = self._wrap(torso_r + dr)
            out.append(Scatterer(r, v, amp))
        return out

    def metadata(self) -> dict:
        meta = asdict(self)
        meta["gait_period"] = self.gait_period
        return meta


@dataclass
class Recording:
    """Frames of one simulated pedestrian plus ground truth."""

    profile: PedestrianProfile
    radar: RadarParams
    frames: np.ndarray                      # (n, K, L) complex64
    aliased: np.ndarray = field(default=None)

    @property
    def label(self) -> int:
        return self.profile.label

    def __len__(self) -> int:
        return self.frames.shape[0]

    def frame(self, i: int) -> RadarFrame:
        return RadarFrame(self.frames[i], i, self.radar.frame_rate,
                          bool(self.aliased[i]) if self.aliased is not None else False)


def synth_frame(radar: RadarParams, scene: list[Scatterer], rng: np.random.Generator | None = None,
                frame_index: int = 0, noise: bool = True) -> RadarFrame:
    """Dechirped frame for a list of scatterers; noise needs ``rng``."""
    K, L = radar.K, radar.L
    k = np.arange(K)
    l = np.arange(L)
    s = np.zeros((K, L), dtype=np.complex128)
    aliased = False
    for sc in scene:
        if not 0.0 <= sc.range_m < radar.max_range:
            raise InvalidInputError(
                f"scatterer range {sc.range_m:.3f} m outside unambiguous range [0, {radar.max_range:.3f})")
        if abs(sc.velocity) >= radar.max_velocity:
            aliased = True
        fr = radar.range_bin(sc.range_m)
        fd = radar.doppler_bin(sc.velocity)
        s += sc.amplitude * np.outer(np.exp(2j * np.pi * fr * k / K), np.exp(2j * np.pi * fd * l / L))
    if noise and rng is not None and np.isfinite(radar.snr_db):
        sigma = 10.0 ** (-radar.snr_db / 20.0) / math.sqrt(2.0)
        s += sigma * (rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L)))
    return RadarFrame(s, frame_index, radar.frame_rate, aliased)


def simulate(profile: PedestrianProfile, radar: RadarParams, duration: float | None = None) -> Recording:
    duration = profile.duration if duration is None else duration
    n = int(round(duration * radar.frame_rate))
    rng = np.random.default_rng(profile.rng_seed)
    frames = np.empty((n, radar.K, radar.L), dtype=np.complex64)
    aliased = np.zeros(n, dtype=bool)
    for i in range(n):
        fr = synth_frame(radar, profile.scatterers(i / radar.frame_rate), rng, i)
        frames[i] = fr.samples
        aliased[i] = fr.aliased
    return Recording(profile, radar, frames, aliased)


def make_dataset(profiles: list[PedestrianProfile], radar: RadarParams,
                 duration: float | None = None) -> list[Recording]:
    """One recording per pedestrian, ``duration * frame_rate`` frames each."""
    if len(profiles) < 2:
        raise InvalidInputError("a dataset needs at least two pedestrian profiles")
    return [simulate(p, radar, duration) for p in profiles]


def default_profiles(duration: float = 60.0, seed: int = 0) -> list[PedestrianProfile]:
    """Three pedestrians with distinct speed and gait frequency."""
    return [
        PedestrianProfile(0, base_range=3.0, torso_speed=0.6, gait_freq=1.25, limb_amplitude=1.0,
                          duration=duration, rng_seed=seed * 101 + 1),
        PedestrianProfile(1, base_range=5.0, torso_speed=1.0, gait_freq=1.0, limb_amplitude=1.3,
                          duration=duration, rng_seed=seed * 101 + 2),
        PedestrianProfile(2, base_range=7.0, torso_speed=1.4, gait_freq=0.8, limb_amplitude=1.6,
                          duration=duration, rng_seed=seed * 101 + 3),
    ]
