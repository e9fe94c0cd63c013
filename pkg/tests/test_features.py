import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from demcl import features as ft
from demcl.errors import FlatWindowError, InvalidConfigError, InvalidInputError
from demcl.radarproc import TimeDopplerSpectrogram

CFG = ft.FeatureWindowConfig(fallback_period=1.0)


def lines_tds(n, D, bins, level=100.0, axis=True):
    E = np.zeros((n, D))
    for b in bins:
        E[:, b] = level
    return TimeDopplerSpectrogram(E, 15.0, np.arange(D) if axis else None)


def gait_tds(period, n=165, D=40, rate=15.0, torso=15, amp=8, seed=0):
    """Torso line plus an upper limb trace moving with the given period, over a noisy floor."""
    r = np.random.default_rng(seed)
    E = r.normal(0.0, 0.5, (n, D))
    t = np.arange(n) / rate
    top = torso + 2 + np.round(amp * (0.5 + 0.5 * np.sin(2 * np.pi * t / period))).astype(int)
    for i in range(n):
        E[i, torso:top[i] + 1] += 20.0
    E[:, torso] += 10.0
    return TimeDopplerSpectrogram(E, rate, np.arange(D))


def test_single_line():
    f = ft.extract_features(lines_tds(165, 30, [12]), CFG)
    assert (f.f1, f.f2, f.f3) == (12.0, 1.0, 1.0)


def test_flat_window_needs_fallback():
    with pytest.raises(FlatWindowError):
        ft.extract_features(lines_tds(165, 30, [12]), ft.FeatureWindowConfig())
    assert ft.extract_features(lines_tds(165, 30, [12]), CFG).f4 == 1.0


def test_two_lines_inclusive_span():
    f = ft.extract_features(lines_tds(165, 30, [10, 20]), CFG)
    assert f.f2 == 11.0
    assert f.f3 == 1.0 and f.f1 == 10.0      # tie goes to the first bin


def test_f1_reports_axis_units():
    f = ft.extract_features(lines_tds(165, 30, [12], axis=False), CFG)
    assert f.f1 == -3.0


@pytest.mark.parametrize("period", [0.8, 1.0, 1.25])
def test_period_of_synthetic_gait(period):
    f = ft.extract_features(gait_tds(period), ft.FeatureWindowConfig())
    assert abs(f.f4 - period) <= 0.05 * period
    assert f.f1 == 15.0


def test_envelope_period_parabolic_refinement():
    rate = 15.0
    t = np.arange(300) / rate
    env = np.sin(2 * np.pi * t / 1.1)
    assert ft.envelope_period(env, rate) == pytest.approx(1.1, rel=0.02)
    with pytest.raises(FlatWindowError):
        ft.envelope_period(np.ones(50), rate)


def test_upper_envelope():
    w = np.zeros((3, 6))
    w[0, 4] = 10
    w[1, [1, 2]] = 10
    env = ft.upper_envelope(w, 2.0)
    np.testing.assert_array_equal(env, [4, 2, 0])


def test_window_length_checked():
    with pytest.raises(InvalidInputError):
        ft.extract_features(lines_tds(100, 30, [3]), CFG)


def test_config_validation():
    with pytest.raises(InvalidConfigError):
        ft.FeatureWindowConfig(Z=1)
    with pytest.raises(InvalidConfigError):
        ft.FeatureWindowConfig(min_period=3, max_period=1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-200, 200))
def test_offset_invariance_and_band_nesting(seed, offset):
    r = np.random.default_rng(seed)
    E = r.normal(0, 3, (165, 24)) + r.uniform(0, 30, 24)
    tds = TimeDopplerSpectrogram(E, 15.0)
    a = ft.extract_features(tds, CFG)
    b = ft.extract_features(TimeDopplerSpectrogram(E + offset, 15.0), CFG)
    assert (a.f1, a.f2, a.f3) == (b.f1, b.f2, b.f3)
    assert a.f4 == pytest.approx(b.f4, rel=1e-9)
    assert a.f2 >= a.f3


def test_thresholds_scale_with_range_bins():
    E = np.zeros((165, 20))
    E[:, 5] = 100.0
    E[:, 8] = 100.0 - 30.0
    one = ft.extract_features(TimeDopplerSpectrogram(E, 15.0, np.arange(20), range_bins=1), CFG)
    many = ft.extract_features(TimeDopplerSpectrogram(E, 15.0, np.arange(20), range_bins=4), CFG)
    assert one.f2 == 1.0 and many.f2 == 4.0


# -- sample alignment ----------------------------------------------------------------

def test_window_start_rule():
    assert ft.feature_window_start(100, 45, 165, 400) == 100 + 22 - 82
    assert ft.feature_window_start(0, 45, 165, 400) == 0
    assert ft.feature_window_start(355, 45, 165, 400) == 400 - 165
    assert ft.feature_window_start(60, 45, 165, 165) == 0


def test_features_for_samples_uses_whole_tds():
    tds = gait_tds(1.0, n=165)
    (f,) = ft.features_for_samples(tds, [60])
    assert f == ft.extract_features(tds)


def test_features_for_samples_errors():
    tds = gait_tds(1.0, n=165)
    with pytest.raises(InvalidInputError):
        ft.features_for_samples(tds, [130])
    with pytest.raises(InvalidConfigError):
        ft.features_for_samples(gait_tds(1.0, n=100), [0])


def test_csv_roundtrip():
    rows = [(0, 1, ft.GaitFeatures(3.0, 5.0, 1.0, 0.8123456789)), (1, 2, ft.GaitFeatures(-1.5, 2, 2, 1.25))]
    text = ft.features_to_csv(rows)
    assert text.splitlines()[0] == "sample_id,label,f1,f2,f3,f4"
    assert ft.features_from_csv(text) == rows
    with pytest.raises(InvalidInputError):
        ft.features_from_csv("a,b\n1,2\n")
