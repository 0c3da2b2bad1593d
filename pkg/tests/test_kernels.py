import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modresp import _kernels_py as py
from modresp import kernels

cy = pytest.importorskip("modresp._kernels") if kernels.BACKEND == "cython" else None


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_single_section_is_allpass():
    r, theta = 0.95, 0.3
    a1, a2 = np.array([-2 * r * np.cos(theta)]), np.array([r * r])
    x = np.zeros(4096)
    x[0] = 1.0
    h = py.allpass_cascade(x, a1, a2)
    mag = np.abs(np.fft.rfft(h))
    np.testing.assert_allclose(mag, 1.0, atol=1e-9)


def test_empty_cascade_is_identity():
    x = np.arange(5.0)
    np.testing.assert_array_equal(py.allpass_cascade(x, np.empty(0), np.empty(0)), x)


@pytest.mark.skipif(cy is None, reason="compiled kernels not built")
@settings(max_examples=25, deadline=None)
@given(n_sec=st.integers(0, 9), n=st.integers(1, 600), seed=st.integers(0, 2**31 - 1))
def test_allpass_parity(n_sec, n, seed):
    rng = np.random.default_rng(seed)
    r = rng.uniform(0.5, 0.999, n_sec)
    th = rng.uniform(0, np.pi, n_sec)
    a1, a2 = np.ascontiguousarray(-2 * r * np.cos(th)), np.ascontiguousarray(r * r)
    x = rng.standard_normal(n)
    np.testing.assert_allclose(cy.allpass_cascade(x, a1, a2), py.allpass_cascade(x, a1, a2),
                               rtol=1e-9, atol=1e-9)


@pytest.mark.skipif(cy is None, reason="compiled kernels not built")
@settings(max_examples=25, deadline=None)
@given(frames=st.integers(1, 12), width=st.integers(8, 80), thr=st.floats(0.05, 1.5),
       seed=st.integers(0, 2**31 - 1))
def test_yin_pick_parity(frames, width, thr, seed):
    rng = np.random.default_rng(seed)
    cmnd = np.ascontiguousarray(rng.uniform(0, 2, (frames, width)))
    lo, hi = 2, width - 3
    la, ra = cy.yin_pick(cmnd, lo, hi, thr)
    lb, rb = py.yin_pick(cmnd, lo, hi, thr)
    np.testing.assert_array_equal(la, lb)
    np.testing.assert_allclose(ra, rb, equal_nan=True)


def test_yin_pick_follows_dip_to_minimum():
    row = np.array([1, 1, 1, 0.09, 0.05, 0.02, 0.03, 0.5, 1, 1.0])
    lags, refined = py.yin_pick(row[None, :], 2, 8, 0.1)
    assert lags[0] == 5
    assert 4.5 < refined[0] < 5.5


def test_yin_pick_no_dip():
    lags, refined = py.yin_pick(np.ones((2, 10)), 2, 8, 0.1)
    assert np.all(lags == -1) and np.all(np.isnan(refined))
