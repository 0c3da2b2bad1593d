"""Frequency-modulated harmonic test tones.

The excitation is smoothed by a Gaussian kernel into a cents-domain
modulation track, which drives a harmonic oscillator in the log-frequency
domain. Harmonic amplitudes follow a fixed /a/-like resonance envelope.
"""
from __future__ import annotations

import math
import wave
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from modresp.errors import ArgumentError, ClippingError, ConfigurationError
from modresp.sequence import ModulationExcitation, SequenceLayout

SAMPLE_RATE = 44100.0
MAX_HARMONICS = 40
PEAK_LEVEL = 0.5

FORMANTS_HZ = (800.0, 1200.0, 2500.0, 3500.0)
BANDWIDTHS_HZ = (80.0, 100.0, 150.0, 200.0)
TILT_REFERENCE_HZ = 100.0


@dataclass(frozen=True)
class GaussianSmoother:
    sigma_s: float = 0.005
    sample_rate: float = SAMPLE_RATE

    def __post_init__(self):
        if not self.sigma_s > 0:
            raise ConfigurationError("sigma_s must be positive")

    @property
    def half_length(self) -> int:
        """Half-length (samples) where the kernel falls to machine epsilon."""
        sigma = self.sigma_s * self.sample_rate
        return int(round(sigma * math.sqrt(-2.0 * math.log(np.finfo(float).eps))))

    @property
    def half_length_s(self) -> float:
        return self.half_length / self.sample_rate

    @property
    def kernel(self) -> np.ndarray:
        sigma = self.sigma_s * self.sample_rate
        n = np.arange(-self.half_length, self.half_length + 1)
        k = np.exp(-0.5 * (n / sigma) ** 2)
        return k / k.sum()


@dataclass(frozen=True)
class VfoConfig:
    carrier_f0: float
    num_harmonics: int | None = None
    depth_cents: float = 25.0
    sample_rate: float = SAMPLE_RATE

    def __post_init__(self):
        if not self.carrier_f0 > 0:
            raise ConfigurationError("carrier_f0 must be positive")
        if not self.depth_cents > 0:
            raise ConfigurationError("depth_cents must be positive")
        if self.harmonics < 1:
            raise ConfigurationError(f"no harmonic fits below Nyquist at {self.carrier_f0} Hz")
        if self.carrier_f0 * self.harmonics >= 0.5 * self.sample_rate:
            raise ConfigurationError(
                f"harmonic {self.harmonics} of {self.carrier_f0} Hz reaches Nyquist"
            )

    @property
    def harmonics(self) -> int:
        if self.num_harmonics is not None:
            return int(self.num_harmonics)
        return default_num_harmonics(self.carrier_f0, self.sample_rate)


def default_num_harmonics(carrier_f0: float, sample_rate: float = SAMPLE_RATE) -> int:
    return min(MAX_HARMONICS, int(0.45 * sample_rate // carrier_f0))


def f0_grid(f_min: float = 80.0, f_max: float = 800.0, steps_per_octave: int = 48) -> np.ndarray:
    """Carriers ``f_min * 2**(k/steps)`` up to ``f_max`` plus half a step."""
    if not 0 < f_min <= f_max or steps_per_octave < 1:
        raise ConfigurationError("need 0 < f_min <= f_max and steps_per_octave >= 1")
    kmax = math.floor(steps_per_octave * math.log2(f_max / f_min) + 0.5 + 1e-9)
    return f_min * 2.0 ** (np.arange(kmax + 1) / steps_per_octave)


def smooth_excitation(ex: ModulationExcitation, smoother: GaussianSmoother,
                      depth_cents: float) -> np.ndarray:
    """Gaussian-smooth the excitation and scale it to ``depth_cents`` RMS.

    The RMS is measured over the excitation's steady region. An all-zero
    excitation yields an all-zero track.
    """
    x = np.asarray(ex.samples, dtype=float)
    k = smoother.kernel
    if len(k) >= len(x):
        raise ArgumentError("smoothing kernel is longer than the excitation")
    y = signal.fftconvolve(x, k, mode="same")
    lo, hi = ex.steady_region
    rms = np.sqrt(np.mean(y[lo:hi] ** 2))
    if rms == 0.0:
        return np.zeros_like(y)
    return y * (depth_cents / rms)


def vowel_envelope(freq, bandwidth_scale: float = 1.0):
    """Amplitude of the /a/ envelope at ``freq`` (Hz).

    Four unity-DC-gain resonances times a -6 dB/octave source tilt.
    """
    f = np.asarray(freq, dtype=float)
    amp = TILT_REFERENCE_HZ / f
    for fc, bw in zip(FORMANTS_HZ, BANDWIDTHS_HZ):
        half = 0.5 * bw * bandwidth_scale
        num = fc * fc + half * half
        amp = amp * num / np.sqrt(((f - fc) ** 2 + half * half) * ((f + fc) ** 2 + half * half))
    return amp


def vowel_shape(harmonic_index: int, f: float, bandwidth_scale: float = 1.0) -> float:
    """Envelope amplitude for harmonic ``harmonic_index`` of fundamental ``f``."""
    if not f > 0:
        raise ArgumentError("f must be positive")
    return float(vowel_envelope(harmonic_index * f, bandwidth_scale))


def fm_harmonic_tone(m_cents, vfo: VfoConfig, amplitudes=None) -> np.ndarray:
    """Harmonic tone whose fundamental is ``carrier * 2**(m/1200)``.

    The phase is the running sum of the instantaneous frequency, so
    ``phase[n] - phase[n-1] == 2*pi*f_inst[n]/fs`` exactly. The output is
    scaled to a peak of 0.5.
    """
    m = np.asarray(m_cents, dtype=float)
    fs = vfo.sample_rate
    f_inst = vfo.carrier_f0 * np.exp2(m / 1200.0)
    h_count = vfo.harmonics
    top = float(f_inst.max()) if f_inst.size else vfo.carrier_f0
    for h in range(1, h_count + 1):
        if h * top >= 0.5 * fs:
            raise ConfigurationError(
                f"harmonic {h} reaches {h * top:.1f} Hz, at or above Nyquist {0.5 * fs} Hz"
            )
    if amplitudes is None:
        amplitudes = [vowel_shape(h, vfo.carrier_f0) for h in range(1, h_count + 1)]
    amplitudes = np.asarray(amplitudes, dtype=float)
    if amplitudes.shape != (h_count,):
        raise ArgumentError(f"expected {h_count} harmonic amplitudes")
    phase = (2.0 * np.pi / fs) * np.cumsum(f_inst)
    out = np.zeros_like(phase)
    for h, a in enumerate(amplitudes, start=1):
        out += a * np.sin(h * phase)
    peak = np.max(np.abs(out)) if out.size else 0.0
    if peak > 0:
        out *= PEAK_LEVEL / peak
    return out


@dataclass
class TestSignalBundle:
    audio: np.ndarray
    reference_cents: np.ndarray
    vfo: VfoConfig
    layout: SequenceLayout
    smoother: GaussianSmoother
    seeds: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if len(self.audio) != len(self.reference_cents):
            raise ArgumentError("audio and reference track lengths differ")


def make_bundle(reference_cents, vfo: VfoConfig, layout: SequenceLayout,
                smoother: GaussianSmoother, seeds=None) -> TestSignalBundle:
    audio = fm_harmonic_tone(reference_cents, vfo)
    return TestSignalBundle(audio, np.asarray(reference_cents), vfo, layout, smoother,
                            dict(seeds or {}))


def write_wav_24bit(audio, path, sample_rate: float = SAMPLE_RATE) -> None:
    """Write mono 24-bit little-endian PCM WAV."""
    x = np.asarray(audio, dtype=float)
    bad = np.flatnonzero(~(np.abs(x) <= 1.0))
    if bad.size:
        raise ClippingError(int(bad[0]), float(x[bad[0]]))
    q = np.clip(np.round(x * 2.0 ** 23), -(2 ** 23), 2 ** 23 - 1).astype("<i4")
    frames = q.view(np.uint8).reshape(-1, 4)[:, :3].tobytes()
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(3)
        w.setframerate(int(round(sample_rate)))
        w.writeframes(frames)


def read_wav_24bit(path):
    """Read a mono 24-bit PCM WAV; returns ``(samples, sample_rate)``."""
    with wave.open(str(path), "rb") as w:
        if w.getsampwidth() != 3 or w.getnchannels() != 1:
            raise ArgumentError(f"{path}: expected mono 24-bit PCM")
        rate = w.getframerate()
        raw = np.frombuffer(w.readframes(w.getnframes()), dtype=np.uint8).reshape(-1, 3)
    wide = np.zeros((len(raw), 4), dtype=np.uint8)
    wide[:, :3] = raw
    wide[:, 3] = np.where(raw[:, 2] & 0x80, 0xFF, 0)
    return wide.view("<i4").ravel().astype(float) / 2.0 ** 23, float(rate)
