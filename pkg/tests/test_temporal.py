import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from curv4d.errors import LengthMismatch, TooFewFrames
from curv4d.geometry import PointCloud
from curv4d.pipeline import correlation_series
from curv4d.stripes import StripeConfig, all_stripe_axes, frame_curvatures
from curv4d.synth import SynthConfig, gen_recording
from curv4d.temporal import (CorrelationSeries, SeriesBuilder, build_series, correlate_frames,
                             default_max_lag, max_cross_correlation, mean_series, sigma_features)

from oracles import xcorr_exhaustive

from test_stripes import CANON, grid_plane

curv = st.floats(0, 1 / 3, allow_subnormal=False)


def vec(m):
    return hnp.arrays(np.float64, m, elements=curv)


# ---- max_cross_correlation -------------------------------------------------------------

def test_xcorr_shifted_unit():
    r, lag = max_cross_correlation([0, 1, 0, 0], [0, 0, 1, 0], 2)
    assert r == 1.0
    assert (r, lag) == xcorr_exhaustive([0, 1, 0, 0], [0, 0, 1, 0], 2)
    assert lag == -1


def test_xcorr_self_peaks_at_zero(rng):
    v = rng.uniform(0, 1 / 3, 64)
    r, lag = max_cross_correlation(v, v, 8)
    assert lag == 0 and r == pytest.approx(float(v @ v), rel=1e-14)


def test_xcorr_zero_vector():
    assert max_cross_correlation(np.zeros(8), np.arange(8.0), 3) == (0.0, 0)
    assert max_cross_correlation(np.arange(8.0), np.zeros(8), 3) == (0.0, 0)


def test_xcorr_errors():
    with pytest.raises(LengthMismatch):
        max_cross_correlation(np.zeros(8), np.zeros(9), 1)
    with pytest.raises(ValueError):
        max_cross_correlation(np.zeros(8), np.zeros(8), 8)


def test_default_lag():
    assert default_max_lag(64) == 8 and default_max_lag(8) == 1


@given(st.integers(1, 40).flatmap(lambda m: st.tuples(vec(m), vec(m), st.integers(0, m - 1))))
def test_xcorr_matches_enumeration(case):
    a, b, lag = case
    r, j = max_cross_correlation(a, b, lag)
    r0, j0 = xcorr_exhaustive(a, b, lag)
    assert r == pytest.approx(r0, rel=1e-12, abs=1e-300)
    if r0 > 0:
        # the winning lag can only differ when two lags tie to rounding
        s = sum(b[i] * a[i + j] for i in range(len(a)) if 0 <= i + j < len(a))
        assert s == pytest.approx(r0, rel=1e-12)
    else:
        assert j == 0


@given(st.integers(2, 30).flatmap(lambda m: st.tuples(vec(m), vec(m), st.integers(0, m - 1))))
def test_xcorr_symmetric_value(case):
    a, b, lag = case
    r1, j1 = max_cross_correlation(a, b, lag)
    r2, j2 = max_cross_correlation(b, a, lag)
    assert r1 == pytest.approx(r2, rel=1e-12, abs=1e-300)
    assert r1 >= 0


@given(st.integers(8, 40).flatmap(lambda m: st.tuples(vec(m), st.integers(-(m // 8), m // 8))))
def test_xcorr_shift_recovers_lag(case):
    v, s = case
    m = len(v)
    v = v.copy()
    v[:abs(s)] = 0
    v[m - abs(s):] = 0
    cur = np.zeros(m)
    if s >= 0:
        cur[s:] = v[:m - s]
    else:
        cur[:m + s] = v[-s:]
    r, j = max_cross_correlation(v, cur, m // 8)
    assert r == pytest.approx(float(v @ v), rel=1e-12, abs=1e-300)
    if r > 0:
        # the peak is at -s; another lag may only tie with it
        best, _ = xcorr_exhaustive(v, cur, m // 8)
        assert best == pytest.approx(r, rel=1e-12)


@given(st.integers(4, 24).flatmap(lambda m: st.tuples(vec(m), vec(m))), st.floats(0, 10))
def test_xcorr_bilinear(case, c):
    a, b = case
    r, _ = max_cross_correlation(a, b, len(a) // 8)
    rc, _ = max_cross_correlation(c * a, c * b, len(a) // 8)
    assert rc == pytest.approx(c * c * r, rel=1e-9, abs=1e-300)


# ---- series -------------------------------------------------------------------------------

def test_series_static_sequence(rng):
    f = rng.uniform(0, 0.3, (16, 32))
    s = build_series([f] * 5)
    assert s.values.shape == (16, 4)
    assert np.all(s.values == s.values[:, :1])
    assert not sigma_features(s).sigma.any()


def test_series_two_frames(rng):
    s = build_series([rng.uniform(size=(4, 8)), rng.uniform(size=(4, 8))])
    assert s.values.shape == (4, 1)


def test_series_errors(rng):
    with pytest.raises(TooFewFrames):
        build_series([np.zeros((4, 8))])
    with pytest.raises(LengthMismatch):
        build_series([np.zeros((4, 8)), np.zeros((4, 9))])


def test_series_entries_match_enumeration(rng):
    frames = [rng.uniform(0, 0.3, (6, 16)) for _ in range(4)]
    s = build_series(frames, 2)
    for t in range(1, 4):
        for k in range(6):
            r, j = xcorr_exhaustive(frames[t - 1][k], frames[t][k], 2)
            assert s.values[k, t - 1] == pytest.approx(r, rel=1e-12)
            assert abs(s.lags[k, t - 1]) <= 2


def test_builder_equals_batch(rng):
    frames = [rng.uniform(0, 0.3, (5, 16)) for _ in range(6)]
    b = SeriesBuilder()
    for f in frames:
        b.push(f)
    np.testing.assert_array_equal(b.result().values, build_series(frames).values)
    v, j = correlate_frames(frames[0], frames[1], 2)
    assert v.shape == (5,) and j.shape == (5,)


def test_oscillating_bump_stripe():
    cfg = StripeConfig(n_stripes=16, n_samples=32)
    _, n2 = all_stripe_axes(CANON, 16)
    centre = 0.05 * n2[6]
    frames = []
    for t in range(8):
        h = 0.003 * (1.2 + np.sin(2 * np.pi * t / 5))
        pts = grid_plane(spacing=0.001, bump=(centre[0], centre[1], 0.005, h))
        frames.append(frame_curvatures(PointCloud(pts), CANON, cfg).values)
    series = build_series(frames)
    sig = sigma_features(series).sigma
    # brute-force lag-maximised correlation along the bump stripe
    ref = [xcorr_exhaustive(frames[t - 1][6], frames[t][6], default_max_lag(32))[0] for t in range(1, 8)]
    np.testing.assert_allclose(series.values[6], ref, rtol=1e-12)
    untouched = [k for k in range(16) if n2[k] @ n2[6] < 0]
    assert sig[6] >= 10 * max(sig[untouched].max(), 1e-300)
    assert sig[6] > 0


# ---- sigma / mean -------------------------------------------------------------------------

def test_sigma_hand_values():
    s = CorrelationSeries(np.array([[0.0, 2.0], [3.0, 3.0]]), np.zeros((2, 2), int))
    np.testing.assert_array_equal(sigma_features(s).sigma, [1.0, 0.0])


def test_sigma_empty():
    with pytest.raises(TooFewFrames):
        sigma_features(CorrelationSeries(np.zeros((3, 0)), np.zeros((3, 0), int)))


def test_sigma_time_reversal(rng):
    frames = [rng.uniform(0, 0.3, (8, 16)) for _ in range(7)]
    a = sigma_features(build_series(frames)).sigma
    b = sigma_features(build_series(frames[::-1])).sigma
    np.testing.assert_allclose(a, b, rtol=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(0, 5))
def test_sigma_scales_quadratically(seed, c):
    rng = np.random.default_rng(seed)
    frames = [rng.uniform(0, 0.3, (3, 16)) for _ in range(4)]
    a = sigma_features(build_series(frames)).sigma
    b = sigma_features(build_series([c * f for f in frames])).sigma
    np.testing.assert_allclose(b, c * c * a, rtol=1e-9, atol=1e-15)


def test_mean_series_constant_and_single():
    s = CorrelationSeries(np.full((4, 3), 0.7), np.zeros((4, 3), int))
    per_stripe, per_frame = mean_series(s)
    np.testing.assert_allclose(per_stripe, 0.7)
    np.testing.assert_allclose(per_frame, 0.7)
    one = CorrelationSeries(np.array([[1.0], [2.0]]), np.zeros((2, 1), int))
    np.testing.assert_array_equal(mean_series(one)[0], [1.0, 2.0])


def _cheek_stats(amplitude):
    rec = gen_recording(SynthConfig(seed=11, frames=24, points_per_frame=30_000,
                                    deformation_amplitude=amplitude), 0)
    series = correlation_series(rec.clouds, rec.landmarks)
    _, n2 = all_stripe_axes(CANON, series.n_stripes)
    cheek = np.flatnonzero(np.abs(n2[:, 0]) > 0.97)
    sig = sigma_features(series).sigma[cheek].mean()
    change = np.abs(np.diff(series.values[cheek], axis=1)).mean()
    return sig, change


def test_session_amplitude_ordering():
    sig_a, change_a = _cheek_stats(0.004)
    sig_b, change_b = _cheek_stats(0.008)
    assert sig_b > sig_a
    assert change_b > change_a
