"""Range-Doppler and time-Doppler processing of dechirped FMCW frames.

A frame ``s(k, l)`` holds ``K`` fast-time samples (range) for each of ``L``
chirps (slow time, Doppler).  The 2-D DFT gives ``S(u, v)`` with ``u`` the
range bin and ``v`` the Doppler bin.  Range-Doppler maps keep ``S`` in dB with
the Doppler axis shifted so that zero radial velocity sits at bin ``L // 2``.
The Doppler profile of a map is the plain sum of its dB values over range, and
a time-Doppler spectrogram (TDS) stacks consecutive profiles.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import InvalidConfigError, InvalidInputError

#: Amplitude floor applied before ``log10`` so empty cells map to -240 dB.
DB_FLOOR = 1e-12

DEFAULT_RANGE_GATE = (0.5, 10.0)


@dataclass
class RadarFrame:
    """One ``K x L`` dechirped frame (fast time x slow time)."""

    samples: np.ndarray
    frame_index: int = 0
    frame_rate: float = 15.0
    aliased: bool = False

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2 or s.shape[0] < 2 or s.shape[1] < 2:
            raise InvalidInputError(f"frame must be a K x L grid with K, L >= 2, got shape {s.shape}")
        if not self.frame_rate > 0:
            raise InvalidInputError(f"frame_rate must be positive, got {self.frame_rate}")
        self.samples = s.astype(np.complex128, copy=False)

    @property
    def K(self) -> int:
        return self.samples.shape[0]

    @property
    def L(self) -> int:
        return self.samples.shape[1]


@dataclass
class RangeDopplerMap:
    """``R x D`` grid of dB magnitudes with bin-center axes."""

    magnitude_db: np.ndarray
    range_axis: np.ndarray
    doppler_axis: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        m = np.asarray(self.magnitude_db, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise InvalidInputError(f"RDM must be a non-empty 2-D grid, got shape {m.shape}")
        ra = np.asarray(self.range_axis, dtype=np.float64)
        da = np.asarray(self.doppler_axis, dtype=np.float64)
        if ra.shape != (m.shape[0],) or da.shape != (m.shape[1],):
            raise InvalidInputError(
                f"axis lengths {ra.shape}, {da.shape} do not match grid {m.shape}")
        if ra.size > 1 and np.any(np.diff(ra) <= 0):
            raise InvalidInputError("range_axis must be strictly increasing")
        self.magnitude_db, self.range_axis, self.doppler_axis = m, ra, da

    @property
    def shape(self) -> tuple[int, int]:
        return self.magnitude_db.shape

    @property
    def zero_doppler_index(self) -> int:
        return int(np.argmin(np.abs(self.doppler_axis)))


@dataclass
class TimeDopplerSpectrogram:
    """Doppler profiles over time.

    ``columns[i]`` is the profile ``e_i`` of frame ``i``, so the array has
    shape ``(n, D)``: time along the first axis, Doppler along the second.
    Because profiles are sums of dB values, a per-cell contrast of ``x`` dB
    shows up as roughly ``range_bins * x`` in the TDS.
    """

    columns: np.ndarray
    frame_rate: float = 15.0
    doppler_axis: np.ndarray | None = None
    range_bins: int = 1     # number of range cells summed into each profile entry

    def __post_init__(self):
        c = np.asarray(self.columns, dtype=np.float64)
        if c.ndim != 2:
            raise InvalidInputError(f"TDS must be 2-D (n, D), got shape {c.shape}")
        self.columns = c
        if self.doppler_axis is None:
            self.doppler_axis = np.arange(c.shape[1]) - c.shape[1] // 2
        self.doppler_axis = np.asarray(self.doppler_axis, dtype=np.float64)
        if self.doppler_axis.shape != (c.shape[1],):
            raise InvalidInputError("doppler_axis length does not match TDS profile length")

    @property
    def n(self) -> int:
        return self.columns.shape[0]

    @property
    def D(self) -> int:
        return self.columns.shape[1]

    def segment(self, start: int, stop: int) -> "TimeDopplerSpectrogram":
        return replace(self, columns=self.columns[start:stop].copy())


@dataclass
class DenoiseConfig:
    percentile: float = 75.0
    margin_db: float = 6.0
    # "doppler_bin" estimates one floor per Doppler column, "global" one floor per map
    scope: str = "doppler_bin"

    def __post_init__(self):
        if not 0 < self.percentile < 100:
            raise InvalidConfigError(f"percentile must lie in (0, 100), got {self.percentile}")
        if self.scope not in ("doppler_bin", "global"):
            raise InvalidConfigError(f"unknown denoise scope {self.scope!r}")


def fft2d(frame: RadarFrame | np.ndarray) -> np.ndarray:
    """Unnormalised 2-D DFT ``S(u, v)`` of a frame, same ``K x L`` shape."""
    s = frame.samples if isinstance(frame, RadarFrame) else np.asarray(frame)
    if s.ndim != 2 or 0 in s.shape:
        raise InvalidInputError(f"fft2d needs a non-empty 2-D grid, got shape {s.shape}")
    return np.fft.fft2(s)


def range_gate(n_bins: int, range_resolution: float,
               gate: tuple[float, float] = DEFAULT_RANGE_GATE) -> range:
    """Range bins whose centers ``u * range_resolution`` fall inside ``gate``."""
    lo = int(np.ceil(gate[0] / range_resolution - 1e-9))
    hi = int(np.floor(gate[1] / range_resolution + 1e-9)) + 1
    return range(max(lo, 0), min(hi, n_bins))


def _bins(keep, K: int) -> np.ndarray:
    if isinstance(keep, slice):
        idx = np.arange(K)[keep]
    else:
        idx = np.asarray(list(keep) if isinstance(keep, range) else keep, dtype=np.int64).ravel()
    if idx.size == 0:
        raise InvalidInputError("range-bin selection is empty")
    if idx.min() < 0 or idx.max() >= K:
        raise InvalidInputError(f"range bins must lie in [0, {K}), got [{idx.min()}, {idx.max()}]")
    return idx


def spectrum_to_rdm(spectrum: np.ndarray, keep_range_bins=None, range_resolution: float | None = None,
                    doppler_resolution: float | None = None, frame_index: int = 0) -> RangeDopplerMap:
    """dB range-Doppler map from an already transformed ``K x L`` spectrum."""
    K, L = spectrum.shape
    if keep_range_bins is None:
        keep_range_bins = range(K) if range_resolution is None else range_gate(K, range_resolution)
    idx = _bins(keep_range_bins, K)
    shifted = np.fft.fftshift(spectrum[idx], axes=1)
    mag_db = 20.0 * np.log10(np.maximum(np.abs(shifted), DB_FLOOR))
    range_axis = idx * (range_resolution if range_resolution else 1.0)
    doppler_axis = (np.arange(L) - L // 2) * (doppler_resolution if doppler_resolution else 1.0)
    return RangeDopplerMap(mag_db, range_axis, doppler_axis, frame_index)


def to_rdm(frame: RadarFrame, keep_range_bins=None, range_resolution: float | None = None,
           doppler_resolution: float | None = None) -> RangeDopplerMap:
    """Range-Doppler map of a frame in dB.

    ``keep_range_bins`` may be a slice, range or index list.  When omitted the
    map keeps every bin, or the 0.5-10 m gate if ``range_resolution`` (meters
    per bin) is known.  Axes are in bins unless resolutions are supplied.
    """
    return spectrum_to_rdm(fft2d(frame), keep_range_bins, range_resolution,
                           doppler_resolution, frame.frame_index)


def denoise_rdm(rdm: RangeDopplerMap, cfg: DenoiseConfig | None = None) -> RangeDopplerMap:
    """Clamp cells within ``margin_db`` of the percentile noise floor to that floor."""
    cfg = cfg or DenoiseConfig()
    m = rdm.magnitude_db
    if cfg.scope == "global":
        floor = np.percentile(m, cfg.percentile)
    else:
        floor = np.percentile(m, cfg.percentile, axis=0, keepdims=True)
    floor = np.broadcast_to(floor, m.shape)
    out = np.where(m < floor + cfg.margin_db, floor, m)
    return replace(rdm, magnitude_db=out)


def suppress_zero_doppler(rdm: RangeDopplerMap, atten_db: float = 30.0,
                          half_width: int = 1) -> RangeDopplerMap:
    """Lower the Doppler columns within ``half_width`` of zero velocity by ``atten_db``."""
    D = rdm.shape[1]
    if atten_db < 0 or half_width < 0:
        raise InvalidInputError("atten_db and half_width must be non-negative")
    if 2 * half_width >= D:
        raise InvalidInputError(f"half_width {half_width} too large for {D} Doppler bins")
    out = rdm.magnitude_db.copy()
    z = rdm.zero_doppler_index
    lo, hi = max(z - half_width, 0), min(z + half_width + 1, D)
    out[:, lo:hi] -= atten_db
    return replace(rdm, magnitude_db=out)


def doppler_profile(rdm: RangeDopplerMap | np.ndarray) -> np.ndarray:
    """Sum of dB values over the range axis, one entry per Doppler bin."""
    m = rdm.magnitude_db if isinstance(rdm, RangeDopplerMap) else np.asarray(rdm, dtype=np.float64)
    return m.sum(axis=0)


def build_tds(profiles: Sequence[np.ndarray], frame_rate: float = 15.0,
              doppler_axis: np.ndarray | None = None, range_bins: int = 1) -> TimeDopplerSpectrogram:
    profiles = [np.asarray(p, dtype=np.float64) for p in profiles]
    if not profiles:
        raise InvalidInputError("build_tds needs at least one profile")
    D = profiles[0].shape
    if any(p.ndim != 1 or p.shape != D for p in profiles):
        raise InvalidInputError("all Doppler profiles must be 1-D with the same length")
    return TimeDopplerSpectrogram(np.stack(profiles), frame_rate, doppler_axis, range_bins)


def window_starts(n: int, width: int, stride: int) -> list[int]:
    if width < 1 or stride < 1:
        raise InvalidInputError("width and stride must be >= 1")
    if width > n:
        return []
    return list(range(0, n - width + 1, stride))


def slice_windows(tds: TimeDopplerSpectrogram, width: int, stride: int) -> list[TimeDopplerSpectrogram]:
    """Fixed-width windows starting at 0, stride, 2*stride, ...; empty if ``width > n``."""
    return [tds.segment(s, s + width) for s in window_starts(tds.n, width, stride)]


@dataclass
class ProcessingConfig:
    """Frame-to-profile chain settings used by the pipeline."""

    keep_range_bins: Sequence[int] | None = None
    # one floor per map: per-column floor jitter is multiplied by R in the dB sum
    denoise: DenoiseConfig | None = field(default_factory=lambda: DenoiseConfig(scope="global"))
    suppress_db: float = 30.0
    suppress_width: int = 1
    doppler_bins: int | None = None     # keep this many central Doppler bins; None keeps all


def crop_doppler(rdm: RangeDopplerMap, n_bins: int | None) -> RangeDopplerMap:
    D = rdm.shape[1]
    if n_bins is None or n_bins >= D:
        return rdm
    if n_bins < 1:
        raise InvalidInputError("doppler_bins must be >= 1")
    lo = rdm.zero_doppler_index - n_bins // 2
    lo = min(max(lo, 0), D - n_bins)
    sl = slice(lo, lo + n_bins)
    return replace(rdm, magnitude_db=rdm.magnitude_db[:, sl].copy(), doppler_axis=rdm.doppler_axis[sl].copy())


def process_frame(frame: RadarFrame, cfg: ProcessingConfig, range_resolution: float | None = None,
                  doppler_resolution: float | None = None) -> RangeDopplerMap:
    """Frame -> RDM -> denoise -> zero-Doppler suppression -> Doppler crop."""
    rdm = to_rdm(frame, cfg.keep_range_bins, range_resolution, doppler_resolution)
    if cfg.denoise is not None:
        rdm = denoise_rdm(rdm, cfg.denoise)
    if cfg.suppress_db > 0:
        rdm = suppress_zero_doppler(rdm, cfg.suppress_db, cfg.suppress_width)
    return crop_doppler(rdm, cfg.doppler_bins)
