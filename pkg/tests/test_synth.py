import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from modresp.errors import ArgumentError, ClippingError, ConfigurationError
from modresp.sequence import ModulationExcitation, SequenceLayout
from modresp.synth import (
    GaussianSmoother,
    VfoConfig,
    default_num_harmonics,
    f0_grid,
    fm_harmonic_tone,
    read_wav_24bit,
    smooth_excitation,
    vowel_envelope,
    write_wav_24bit,
)


@pytest.mark.parametrize("steps,count", [(48, 160), (6, 21), (3, 11), (1, 4)])
def test_f0_grid_sizes(steps, count):
    g = f0_grid(80.0, 800.0, steps)
    assert len(g) == count
    assert g[0] == 80.0
    np.testing.assert_allclose(np.diff(np.log2(g)), 1.0 / steps)


def test_f0_grid_validation():
    with pytest.raises(ConfigurationError):
        f0_grid(100.0, 50.0)
    with pytest.raises(ConfigurationError):
        f0_grid(80.0, 800.0, 0)


def test_gaussian_kernel():
    sm = GaussianSmoother(0.005, 44100.0)
    k = sm.kernel
    assert k.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(k, k[::-1])
    assert k[0] / k.max() < 1e-15
    with pytest.raises(ConfigurationError):
        GaussianSmoother(0.0)


def test_smooth_excitation_sets_rms():
    rng = np.random.default_rng(0)
    lay = SequenceLayout(unit_interval=1024, num_allocations=12)
    x = rng.standard_normal(12 * 1024)
    ex = ModulationExcitation(x, lay, 44100.0, (4096, 8192))
    y = smooth_excitation(ex, GaussianSmoother(), 25.0)
    assert np.sqrt(np.mean(y[4096:8192] ** 2)) == pytest.approx(25.0)
    zero = ModulationExcitation(np.zeros_like(x), lay, 44100.0, (4096, 8192))
    assert not np.any(smooth_excitation(zero, GaussianSmoother(), 25.0))


def test_default_harmonics_below_nyquist():
    for f in (80.0, 200.0, 800.0, 5000.0):
        h = default_num_harmonics(f)
        assert 1 <= h <= 40 and h * f < 0.45 * 44100.0 + f


def test_fm_tone_constant_pitch_is_exact_sine():
    fs = 8000.0
    vfo = VfoConfig(200.0, 1, 25.0, fs)
    m = np.full(8000, 1200.0)  # one octave up
    out = fm_harmonic_tone(m, vfo, amplitudes=[1.0])
    n = np.arange(1, 8001)
    np.testing.assert_allclose(out, 0.5 * np.sin(2 * np.pi * 400.0 * n / fs), atol=1e-9)


def test_fm_tone_phase_increments_follow_modulation():
    fs = 44100.0
    rng = np.random.default_rng(3)
    m = np.cumsum(rng.standard_normal(4000)) * 0.5
    out = fm_harmonic_tone(m, VfoConfig(150.0, 1, 25.0, fs), amplitudes=[2.0])
    phase = 2 * np.pi / fs * np.cumsum(150.0 * np.exp2(m / 1200.0))
    expected = np.sin(phase)
    np.testing.assert_allclose(out, 0.5 * expected / np.max(np.abs(expected)), atol=1e-12)


def test_fm_tone_peak_and_nyquist_guard():
    out = fm_harmonic_tone(np.zeros(2000), VfoConfig(220.0))
    assert np.max(np.abs(out)) == pytest.approx(0.5)
    with pytest.raises(ConfigurationError):
        fm_harmonic_tone(np.full(10, 1200.0), VfoConfig(500.0, 40))
    with pytest.raises(ArgumentError):
        fm_harmonic_tone(np.zeros(10), VfoConfig(220.0, 3), amplitudes=[1, 2])


def test_vowel_envelope_peaks_near_formants():
    f = np.arange(50.0, 4000.0, 1.0)
    env = vowel_envelope(f) * f  # remove the source tilt
    assert abs(f[np.argmax(env)] - 800.0) < 100.0
    assert np.all(vowel_envelope(f) > 0)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, st.integers(1, 400), elements=st.floats(-1.0, 1.0)))
def test_wav_round_trip(tmp_path_factory, audio):
    path = tmp_path_factory.mktemp("wav") / "a.wav"
    write_wav_24bit(audio, path, 22050.0)
    back, rate = read_wav_24bit(path)
    assert rate == 22050.0
    np.testing.assert_allclose(back, audio, atol=2.0 ** -23)


def test_wav_clipping(tmp_path):
    with pytest.raises(ClippingError) as err:
        write_wav_24bit(np.array([0.0, 1.5]), tmp_path / "x.wav")
    assert err.value.index == 1
    with pytest.raises(ClippingError):
        write_wav_24bit(np.array([np.nan]), tmp_path / "x.wav")
