import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modresp.errors import MetricError
from modresp.metrics import (
    MetricsRecord,
    SmoothnessRecord,
    bandwidth,
    gain_smoothness,
    map_csv,
    smoothness_csv,
    total_distortion_and_snr,
)

F = np.arange(0, 264) * 0.4486


def lowpass_db(fc):
    return -10 * np.log10(1 + (F / fc) ** 2)


def test_bandwidth_first_order_lowpass():
    g = lowpass_db(20.0)
    b = bandwidth(F, g)
    # first bin past the -3 dB point measured from the plateau, not from 0 dB
    cross = 20.0 * math.sqrt(10 ** ((3.0 - b.plateau_db) / 10) - 1)
    assert b.bw_hz == F[np.searchsorted(F, cross)]
    assert abs(b.bw_hz - 20.0) <= 2 * 0.4486
    assert b.plateau_db == pytest.approx(np.median(lowpass_db(20.0)[(F >= 1) & (F <= 4)]))
    assert not b.band_edge_limited


def test_bandwidth_falls_back_to_band_edge():
    b = bandwidth(F, np.zeros_like(F), masked_above_hz=118.0)
    assert b.bw_hz == 118.0 and b.band_edge_limited
    assert bandwidth(F, np.zeros_like(F)).bw_hz == F[-1]


def test_bandwidth_needs_plateau_bins():
    with pytest.raises(MetricError):
        bandwidth(F[10:], np.zeros(len(F) - 10))


@settings(max_examples=50)
@given(fc=st.floats(5.0, 100.0), shift=st.floats(-60.0, 60.0))
def test_bandwidth_invariant_to_gain_offset(fc, shift):
    g = lowpass_db(fc)
    assert bandwidth(F, g).bw_hz == bandwidth(F, g + shift).bw_hz


@settings(max_examples=50)
@given(r=st.floats(-120, 0), n=st.floats(-120, 0), g=st.floats(-10, 10), bw=st.floats(1, 100))
def test_snr_identity(r, n, g, bw):
    ones = np.ones_like(F)
    td, snr, lti = total_distortion_and_snr(F, g * ones, r * ones, n * ones, bw)
    assert td == pytest.approx(10 * np.log10(10 ** (r / 10) + 10 ** (n / 10)))
    assert lti == pytest.approx(g)
    assert snr - (lti - td) == 0.0


def test_td_excludes_dc():
    rnd = np.full_like(F, -100.0)
    rnd[0] = 50.0
    td, _, _ = total_distortion_and_snr(F, np.zeros_like(F), rnd, np.full_like(F, -400.0), 10.0)
    assert td == pytest.approx(-100.0, abs=1e-6)
    with pytest.raises(MetricError):
        total_distortion_and_snr(F, F, F, F, 0.1)


def test_smoothness_of_flat_and_sloped_surfaces():
    f0s = [100.0, 200.0, 400.0]
    flat = [np.zeros_like(F)] * 3
    s = gain_smoothness("x", f0s, F, flat, [40.0] * 3)
    assert (s.sd_gain_modfreq, s.sd_gain_fundfreq) == (0.0, 0.0)
    tilted = [np.full_like(F, v) for v in (0.0, 1.0, 3.0)]
    s = gain_smoothness("x", f0s, F, tilted, [40.0] * 3)
    assert s.sd_gain_fundfreq == pytest.approx(np.std([1.0] * 5 + [2.0] * 5))


def test_smoothness_errors():
    with pytest.raises(MetricError):
        gain_smoothness("x", [100.0], F, [np.zeros_like(F)], [10.0])
    with pytest.raises(MetricError):
        gain_smoothness("x", [100.0, 200.0], F, [np.zeros_like(F)] * 2, [1.0, 1.0])


def test_csv_writers():
    rec = MetricsRecord("ncf", 100.0, 12.5, -30.0, 28.0, 0.1, -2.0, 1.0, False)
    text = map_csv([rec])
    assert text == "extractor_id,f0_hz,bw_hz,td_db,snr_db\nncf,100.000000,12.500000,-30.000000,28.000000\n"
    s = smoothness_csv([SmoothnessRecord("ncf", 0.5, math.nan)])
    assert s.splitlines()[1] == "ncf,0.500000,nan"
