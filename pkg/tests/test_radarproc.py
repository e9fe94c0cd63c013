import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from demcl import radarproc as rp
from demcl.errors import InvalidConfigError, InvalidInputError


def brute_dft2(s):
    """Direct double-sum 2-D DFT, independent of numpy.fft."""
    K, L = s.shape
    out = np.zeros((K, L), dtype=complex)
    for u in range(K):
        for v in range(L):
            acc = 0j
            for k in range(K):
                for l in range(L):
                    acc += s[k, l] * np.exp(-2j * np.pi * (u * k / K + v * l / L))
            out[u, v] = acc
    return out


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


def rdm_from(grid):
    grid = np.asarray(grid, dtype=float)
    R, D = grid.shape
    return rp.RangeDopplerMap(grid, np.arange(R), np.arange(D) - D // 2)


# -- fft2d ---------------------------------------------------------------------

def test_impulse_transforms_to_constant():
    s = np.zeros((4, 4), complex)
    s[0, 0] = 1
    np.testing.assert_array_equal(rp.fft2d(s), np.ones((4, 4)))


def test_constant_grid_concentrates_at_dc():
    S = rp.fft2d(np.ones((4, 4)))
    assert S[0, 0] == 16
    S[0, 0] = 0
    assert np.max(np.abs(S)) < 1e-12


def test_random_8x8_matches_double_sum():
    rng = np.random.default_rng(3)
    s = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    assert rel_err(rp.fft2d(s), brute_dft2(s)) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_parseval(K, L, seed):
    rng = np.random.default_rng(seed)
    s = rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L))
    S = rp.fft2d(s)
    lhs = np.sum(np.abs(S) ** 2)
    rhs = K * L * np.sum(np.abs(s) ** 2)
    assert abs(lhs - rhs) <= 1e-9 * rhs


def test_fft2d_rejects_empty():
    with pytest.raises(InvalidInputError):
        rp.fft2d(np.zeros((0, 3)))


def test_frame_validation():
    with pytest.raises(InvalidInputError):
        rp.RadarFrame(np.zeros((1, 4)))
    with pytest.raises(InvalidInputError):
        rp.RadarFrame(np.zeros((4, 4)), frame_rate=0)


# -- to_rdm --------------------------------------------------------------------

def test_unit_magnitude_spectrum_is_zero_db():
    s = np.zeros((4, 4), complex)
    s[0, 0] = 1
    rdm = rp.to_rdm(rp.RadarFrame(s))
    np.testing.assert_array_equal(rdm.magnitude_db, 0.0)


def test_single_tall_bin_is_20_db():
    S = np.ones((4, 8), complex)
    S[1, 3] = 10
    rdm = rp.spectrum_to_rdm(S)
    shifted_v = (3 + 4) % 8    # fftshift moves bin 3 of 8 to 7
    assert rdm.magnitude_db[1, shifted_v] == pytest.approx(20.0, abs=1e-12)
    mask = np.ones_like(rdm.magnitude_db, bool)
    mask[1, shifted_v] = False
    assert np.max(np.abs(rdm.magnitude_db[mask])) < 1e-12


def test_zero_doppler_sits_at_center():
    K, L = 8, 16
    s = np.ones((K, L), complex)
    rdm = rp.to_rdm(rp.RadarFrame(s))
    assert rdm.zero_doppler_index == L // 2
    assert np.argmax(rdm.magnitude_db[0]) == L // 2


def test_empty_cells_hit_db_floor():
    rdm = rp.to_rdm(rp.RadarFrame(np.zeros((4, 4), complex)))
    np.testing.assert_allclose(rdm.magnitude_db, -240.0)


def test_range_selection_and_gate():
    s = np.random.default_rng(0).standard_normal((16, 4))
    full = rp.to_rdm(rp.RadarFrame(s))
    part = rp.to_rdm(rp.RadarFrame(s), keep_range_bins=range(2, 5))
    np.testing.assert_array_equal(part.magnitude_db, full.magnitude_db[2:5])
    np.testing.assert_array_equal(part.range_axis, [2, 3, 4])
    assert list(rp.range_gate(100, 0.5)) == list(range(1, 21))
    with pytest.raises(InvalidInputError):
        rp.to_rdm(rp.RadarFrame(s), keep_range_bins=[15, 16])


def test_rdm_is_deterministic():
    s = np.random.default_rng(1).standard_normal((8, 8)) + 0j
    a = rp.to_rdm(rp.RadarFrame(s)).magnitude_db
    b = rp.to_rdm(rp.RadarFrame(s.copy())).magnitude_db
    assert a.tobytes() == b.tobytes()


# -- denoise -------------------------------------------------------------------

def test_denoise_constant_grid_is_identity():
    rdm = rdm_from(np.full((6, 5), -40.0))
    out = rp.denoise_rdm(rdm, rp.DenoiseConfig(75, 6))
    np.testing.assert_array_equal(out.magnitude_db, -40.0)


def test_denoise_keeps_peak_and_flattens_background():
    rng = np.random.default_rng(2)
    g = -40.0 + rng.uniform(-1, 1, (8, 6))
    g[3, 2] = 20.0
    out = rp.denoise_rdm(rdm_from(g), rp.DenoiseConfig(75, 6)).magnitude_db
    floors = np.percentile(g, 75, axis=0)
    assert out[3, 2] == 20.0
    mask = np.ones_like(g, bool)
    mask[3, 2] = False
    expected = np.broadcast_to(floors, g.shape)
    np.testing.assert_array_equal(out[mask], expected[mask])


def test_denoise_median_no_margin():
    g = np.arange(12.0).reshape(4, 3)
    out = rp.denoise_rdm(rdm_from(g), rp.DenoiseConfig(50, 0.0, "global")).magnitude_db
    med = np.median(g)
    np.testing.assert_array_equal(out, np.where(g < med, med, g))


def test_denoise_config_validation():
    with pytest.raises(InvalidConfigError):
        rp.DenoiseConfig(percentile=100)
    with pytest.raises(InvalidConfigError):
        rp.DenoiseConfig(scope="row")


@settings(max_examples=30, deadline=None)
@given(arrays(float, (5, 7), elements=st.floats(-80, 40)), st.floats(1, 99), st.floats(0, 20))
def test_denoise_is_monotone_clamp(g, pct, margin):
    out = rp.denoise_rdm(rdm_from(g), rp.DenoiseConfig(pct, margin)).magnitude_db
    floors = np.percentile(g, pct, axis=0)
    kept = out == g
    assert np.all(kept | (out == np.broadcast_to(floors, g.shape)))
    assert np.all(out[g >= floors + margin] == g[g >= floors + margin])


# -- zero-Doppler suppression ----------------------------------------------------

def test_suppress_zero_atten_is_identity():
    g = np.random.default_rng(0).standard_normal((4, 8))
    out = rp.suppress_zero_doppler(rdm_from(g), 0.0, 2).magnitude_db
    np.testing.assert_array_equal(out, g)


def test_suppress_only_zero_column():
    g = np.zeros((4, 8))
    out = rp.suppress_zero_doppler(rdm_from(g), 30.0, 0).magnitude_db
    assert np.all(out[:, 4] == -30.0)
    assert np.all(np.delete(out, 4, axis=1) == 0.0)


def test_suppress_five_center_columns():
    out = rp.suppress_zero_doppler(rdm_from(np.zeros((3, 10))), 12.0, 2).magnitude_db
    expected = np.zeros((3, 10))
    expected[:, 3:8] = -12.0
    np.testing.assert_array_equal(out, expected)


def test_suppress_rejects_wide_band():
    with pytest.raises(InvalidInputError):
        rp.suppress_zero_doppler(rdm_from(np.zeros((2, 4))), 10, 2)


@settings(max_examples=30, deadline=None)
@given(arrays(float, (3, 9), elements=st.floats(-50, 50)), st.integers(0, 4), st.floats(0, 60))
def test_suppress_touches_only_band(g, hw, atten):
    out = rp.suppress_zero_doppler(rdm_from(g), atten, hw).magnitude_db
    diff = out - g
    outside = np.ones(9, bool)
    outside[4 - hw:4 + hw + 1] = False
    assert np.all(diff[:, outside] == 0.0)


# -- profiles and TDS ------------------------------------------------------------

def test_profile_sums_db():
    np.testing.assert_array_equal(rp.doppler_profile(np.ones((2, 3))), [2, 2, 2])
    g = np.zeros((380, 12))
    g[100, 7] = 10.0
    e = rp.doppler_profile(g)
    assert e[7] == 10.0 and np.count_nonzero(e) == 1


def test_profile_matches_naive_sum():
    g = np.random.default_rng(5).standard_normal((6, 4))
    naive = [sum(g[r, c] for r in range(6)) for c in range(4)]
    np.testing.assert_allclose(rp.doppler_profile(g), naive, rtol=0, atol=1e-12)


def test_build_tds_shapes_and_order():
    p = [np.full(5, float(i)) for i in range(45)]
    tds = rp.build_tds(p)
    assert tds.n == 45 and tds.D == 5
    assert np.array_equal(rp.build_tds(p[:1]).columns[0], p[0])
    perm = np.random.default_rng(0).permutation(45)
    np.testing.assert_array_equal(rp.build_tds([p[i] for i in perm]).columns, tds.columns[perm])
    np.testing.assert_array_equal(tds.doppler_axis, [-2, -1, 0, 1, 2])


def test_build_tds_errors():
    with pytest.raises(InvalidInputError):
        rp.build_tds([])
    with pytest.raises(InvalidInputError):
        rp.build_tds([np.zeros(3), np.zeros(4)])


def test_tds_count_from_rdms():
    rng = np.random.default_rng(0)
    rdms = [rp.to_rdm(rp.RadarFrame(rng.standard_normal((4, 6)))) for _ in range(7)]
    assert rp.build_tds([rp.doppler_profile(r) for r in rdms]).n == 7


def test_slice_windows_counts():
    tds = rp.build_tds([np.zeros(3)] * 100)
    assert len(rp.slice_windows(rp.build_tds([np.zeros(3)] * 45), 45, 1)) == 1
    wins = rp.slice_windows(tds, 45, 45)
    assert len(wins) == 2 and all(w.n == 45 for w in wins)
    assert rp.slice_windows(rp.build_tds([np.zeros(3)] * 44), 45, 1) == []
    with pytest.raises(InvalidInputError):
        rp.slice_windows(tds, 45, 0)


def test_crop_doppler_keeps_center():
    rdm = rdm_from(np.tile(np.arange(16.0), (2, 1)))
    out = rp.crop_doppler(rdm, 8)
    np.testing.assert_array_equal(out.doppler_axis, np.arange(-4, 4))
    assert rp.crop_doppler(rdm, None) is rdm


def test_process_frame_chain():
    rng = np.random.default_rng(0)
    frame = rp.RadarFrame(rng.standard_normal((8, 16)) + 1j * rng.standard_normal((8, 16)))
    cfg = rp.ProcessingConfig(doppler_bins=8)
    out = rp.process_frame(frame, cfg)
    rdm = rp.to_rdm(frame)
    rdm = rp.denoise_rdm(rdm, cfg.denoise)
    rdm = rp.suppress_zero_doppler(rdm, cfg.suppress_db, cfg.suppress_width)
    np.testing.assert_array_equal(out.magnitude_db, rdm.magnitude_db[:, 4:12])
