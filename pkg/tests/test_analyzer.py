import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import signal

from modresp.analyzer import (
    AnalysisConfig,
    AnalysisContext,
    CalibratedResponse,
    analyze,
    calibrate,
    measure_track,
    pair_noise_factors,
    periodize,
    periodizing_window,
    segment_sd_curve,
    select_periodic_pairs,
    to_db,
)
from modresp.errors import AnalysisError, ArgumentError, ConfigurationError


@pytest.fixture(scope="module")
def sys_(small_system):
    return small_system


def test_config_geometry():
    c = AnalysisConfig()
    assert c.n_a == 3072 and c.period == 12288 and c.num_bins == 6145
    assert c.analysis_rate == 5512.5
    assert c.freq_axis[1] == pytest.approx(5512.5 / 12288)
    assert c.compensation_db == 1.76
    assert AnalysisConfig(window_kind="cos").compensation_db == 1.25


@pytest.mark.parametrize("kw", [dict(decimation=7), dict(window_kind="hann"),
                                dict(sd_domain="x"), dict(decimation=0)])
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        AnalysisConfig(**kw)


@pytest.mark.parametrize("kind", ["rect", "cos"])
@given(n=st.integers(1, 500))
def test_window_cross_fade_sums_to_one(kind, n):
    w = periodizing_window(kind, n)
    np.testing.assert_allclose(w + w[::-1], 1.0)
    assert np.all(np.diff(w) >= 0)


def test_periodize_of_periodic_signal_is_identity():
    x = np.tile(np.arange(8.0), 4)
    np.testing.assert_allclose(periodize(x, 8, periodizing_window("cos", 8)), np.arange(8.0))
    with pytest.raises(ArgumentError):
        periodize(x, 20, periodizing_window("rect", 8))


def test_noise_factors_without_overlap():
    w = periodizing_window("rect", 100)
    assert pair_noise_factors(w, [0, 200, 400], 100) == pytest.approx((1.0, 1.0))
    overlap, ratio = pair_noise_factors(w, [0, 100, 200, 300], 100)
    assert overlap > 1.0 and ratio > 1.0


def test_sd_curve_levels():
    cfg = AnalysisConfig(unit_interval=64, decimation=1, sd_domain="cents")
    rng = np.random.default_rng(0)
    per = rng.standard_normal(cfg.period)
    assert np.all(segment_sd_curve(np.tile(per, 5), cfg) <= -280)
    noise = rng.standard_normal(cfg.period * 40)
    assert np.median(segment_sd_curve(noise, cfg)) == pytest.approx(0.0, abs=0.5)


def test_pair_selection_rejects_aperiodic_input(sys_):
    rng = np.random.default_rng(1)
    y = rng.standard_normal(len(sys_.calibration.reference))
    with pytest.raises(AnalysisError) as err:
        select_periodic_pairs(y, sys_.context.config, sys_.context)
    assert err.value.sd_curve is not None and len(err.value.sd_curve) == 8


def test_calibration_pairs_and_counts(sys_):
    cal = sys_.calibration
    assert cal.selection.pairs == [12288 * k for k in range(1, 7)]
    d = cal.decomposition
    assert d.n_pairs == 6 and d.n_short_responses == 72
    assert d.extended.shape == (6, 4 * 3072)
    assert 50.0 < cal.masked_above_hz < 200.0
    assert cal.mask[0] and not cal.mask[-1]


def test_identity_is_null(sys_):
    r = measure_track(sys_.calibration.reference, sys_.calibration, sys_.context)
    assert np.max(np.abs(r.gain_db)) < 1e-9
    assert r.random_db.max() < -200 and r.nonlti_db.max() < -200


def test_delay_keeps_gain(sys_):
    y = np.roll(sys_.calibration.reference, 11)
    r = measure_track(y, sys_.calibration, sys_.context)
    assert np.max(np.abs(r.gain_db)) < 1e-6
    assert r.random_db.max() < -100


@pytest.mark.parametrize("window", ["rect", "cos"])
def test_two_tap_average_recovered(sys_, window):
    cfg = AnalysisConfig(window_kind=window)
    ctx = AnalysisContext.build(sys_.cset, sys_.layout, cfg)
    cal = calibrate(sys_.reference, ctx)
    y = signal.lfilter([0.5, 0.5], [1.0], cal.reference)
    r = measure_track(y, cal, ctx)
    expected = 20 * np.log10(np.abs(np.cos(np.pi * r.freq_hz / cfg.analysis_rate)))
    np.testing.assert_allclose(r.gain_db, expected, atol=0.01)


def test_gain_scales_with_track(sys_):
    cal, ctx = sys_.calibration, sys_.context
    r = measure_track(0.5 * cal.reference, cal, ctx)
    np.testing.assert_allclose(r.gain_db, 20 * np.log10(0.5), atol=1e-9)


def test_analyze_needs_long_enough_track(sys_):
    with pytest.raises(ArgumentError):
        analyze(sys_.calibration.reference[:20000], sys_.context)


def test_response_serialization(sys_):
    r = measure_track(sys_.calibration.reference, sys_.calibration, sys_.context)
    r.meta = {"extractor_id": "identity", "f0_hz": 200.0}
    back = CalibratedResponse.from_json(r.to_json())
    np.testing.assert_allclose(back.gain_db, r.gain_db)
    np.testing.assert_allclose(back.freq_hz, r.freq_hz)
    assert back.meta == r.meta and back.n_short_responses == 72
    assert r.to_json() == back.to_json()
    lines = r.to_csv().splitlines()
    assert lines[0] == "freq_hz,gain_db,random_db,nonlti_db"
    assert len(lines) == len(r.freq_hz) + 1


def test_to_db_floor():
    assert to_db(0.0) == -400.0
    assert to_db(100.0) == pytest.approx(20.0)
