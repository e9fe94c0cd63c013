"""Gait statistics from a window of a time-Doppler spectrogram.

Every threshold is relative to a peak or to a column median, so adding a
constant dB offset to the window leaves every feature unchanged.  Thresholds are given per range cell
and scaled by ``tds.range_bins`` because TDS entries are sums over range.

f1  Doppler value of the strongest bin of the time-averaged profile.
f2  inclusive span (bins) between the outermost bins of the averaged profile
    above ``peak - envelope_threshold_db``.
f3  contiguous span (bins) around the f1 bin above
    ``peak - envelope_threshold_db * torso_band_fraction``.
f4  period (s) of the upper Doppler envelope, from the first local maximum of
    its unbiased autocorrelation inside ``[min_period, max_period]``.  The
    envelope of a column is its highest bin at least ``envelope_margin_db``
    above the column median.
"""

from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import FlatWindowError, InvalidConfigError, InvalidInputError
from .radarproc import TimeDopplerSpectrogram

FEATURE_NAMES = ("f1", "f2", "f3", "f4")


@dataclass(frozen=True)
class GaitFeatures:
    f1: float   # torso Doppler (Doppler-axis units, bins by default)
    f2: float   # total Doppler bandwidth (bins)
    f3: float   # torso bandwidth (bins)
    f4: float   # limb-motion period (s)

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)


@dataclass
class FeatureWindowConfig:
    Z: int = 165
    envelope_threshold_db: float = 12.0
    torso_band_fraction: float = 0.5
    envelope_margin_db: float = 2.0
    min_period: float = 0.3
    max_period: float = 3.0
    fallback_period: float | None = None

    def __post_init__(self):
        if self.Z < 2:
            raise InvalidConfigError(f"Z must be >= 2, got {self.Z}")
        if not (self.envelope_threshold_db > 0 and self.torso_band_fraction > 0
                and self.envelope_margin_db > 0):
            raise InvalidConfigError("feature thresholds must be positive")
        if not 0 < self.min_period < self.max_period:
            raise InvalidConfigError("need 0 < min_period < max_period")


def upper_envelope(window: np.ndarray, margin: float) -> np.ndarray:
    """Highest Doppler index per time column lying ``margin`` above the column median.

    Columns with no such bin map to index 0.
    """
    above = window >= np.median(window, axis=1, keepdims=True) + margin
    D = window.shape[1]
    idx = D - 1 - np.argmax(above[:, ::-1], axis=1)
    idx[~above.any(axis=1)] = 0
    return idx.astype(np.float64)


def _autocorr_unbiased(x: np.ndarray, max_lag: int) -> np.ndarray:
    n = x.size
    full = np.correlate(x, x, mode="full")[n - 1:n + max_lag]
    return full / (n - np.arange(full.size))


def envelope_period(envelope: np.ndarray, frame_rate: float, min_period: float = 0.3,
                    max_period: float = 3.0) -> float:
    """Period in seconds of a per-frame envelope sequence."""
    x = envelope - envelope.mean()
    if not np.any(x):
        raise FlatWindowError("gait envelope is flat; period undefined")
    lo = max(int(np.ceil(min_period * frame_rate)), 1)
    hi = min(int(np.floor(max_period * frame_rate)), x.size - 2)
    if hi <= lo:
        raise FlatWindowError("window too short for the period search range")
    r = _autocorr_unbiased(x, hi + 1)
    lag = None
    for k in range(lo, hi + 1):
        if r[k] > 0 and r[k] >= r[k - 1] and r[k] > r[k + 1]:
            lag = k
            break
    if lag is None:
        lag = lo + int(np.argmax(r[lo:hi + 1]))
    # parabolic refinement around the integer peak
    shift = 0.0
    if 0 < lag < r.size - 1:
        a, b, c = r[lag - 1], r[lag], r[lag + 1]
        den = a - 2 * b + c
        if den < 0:
            shift = float(np.clip(0.5 * (a - c) / den, -0.5, 0.5))
    return (lag + shift) / frame_rate


def extract_features(window: TimeDopplerSpectrogram, cfg: FeatureWindowConfig | None = None,
                     check_length: bool = True) -> GaitFeatures:
    """f1-f4 over a window of ``cfg.Z`` TDS columns."""
    cfg = cfg or FeatureWindowConfig()
    E = window.columns
    if check_length and E.shape[0] != cfg.Z:
        raise InvalidInputError(f"feature window must have Z={cfg.Z} columns, got {E.shape[0]}")
    scale = max(window.range_bins, 1)
    thr = cfg.envelope_threshold_db * scale
    axis = window.doppler_axis

    mean_profile = E.mean(axis=0)
    peak_idx = int(np.argmax(mean_profile))
    peak = mean_profile[peak_idx]
    f1 = float(axis[peak_idx])

    band = np.nonzero(mean_profile >= peak - thr)[0]
    f2 = float(band[-1] - band[0] + 1)

    torso = mean_profile >= peak - thr * cfg.torso_band_fraction
    lo = hi = peak_idx
    while lo > 0 and torso[lo - 1]:
        lo -= 1
    while hi < torso.size - 1 and torso[hi + 1]:
        hi += 1
    f3 = float(hi - lo + 1)

    env = upper_envelope(E, cfg.envelope_margin_db * scale)
    try:
        f4 = envelope_period(env, window.frame_rate, cfg.min_period, cfg.max_period)
    except FlatWindowError:
        if cfg.fallback_period is None:
            raise
        f4 = float(cfg.fallback_period)
    return GaitFeatures(f1, f2, f3, f4)


def feature_window_start(sample_start: int, sample_width: int, Z: int, n: int) -> int:
    """Start of the ``Z``-column window centered on a sample, clipped to ``[0, n - Z]``."""
    center = sample_start + sample_width // 2
    return int(min(max(center - Z // 2, 0), n - Z))


def features_for_samples(tds: TimeDopplerSpectrogram, sample_starts: Sequence[int],
                         cfg: FeatureWindowConfig | None = None,
                         sample_width: int = 45, skip_flat: bool = False) -> list[GaitFeatures | None]:
    """One feature set per TDS sample, computed on a centered, clipped Z window.

    With ``skip_flat`` a window whose gait period is undefined yields ``None``
    instead of raising :class:`FlatWindowError`.
    """
    cfg = cfg or FeatureWindowConfig()
    if cfg.Z > tds.n:
        raise InvalidConfigError(f"feature window Z={cfg.Z} exceeds TDS length {tds.n}")
    out = []
    for s in sample_starts:
        if s < 0 or s + sample_width > tds.n:
            raise InvalidInputError(f"sample window [{s}, {s + sample_width}) lies outside the TDS")
        a = feature_window_start(s, sample_width, cfg.Z, tds.n)
        try:
            out.append(extract_features(tds.segment(a, a + cfg.Z), cfg))
        except FlatWindowError:
            if not skip_flat:
                raise
            out.append(None)
    return out


def features_to_csv(rows: Iterable[tuple[int, int, GaitFeatures]]) -> str:
    """CSV text with header ``sample_id,label,f1,f2,f3,f4``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("sample_id", "label") + FEATURE_NAMES)
    for sample_id, label, f in rows:
        w.writerow((sample_id, label, *(repr(float(v)) for v in astuple(f))))
    return buf.getvalue()


def features_from_csv(text: str) -> list[tuple[int, int, GaitFeatures]]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != ("sample_id", "label") + FEATURE_NAMES:
        raise InvalidInputError(f"unexpected feature CSV header {reader.fieldnames}")
    return [(int(r["sample_id"]), int(r["label"]),
             GaitFeatures(*(float(r[k]) for k in FEATURE_NAMES))) for r in reader]
