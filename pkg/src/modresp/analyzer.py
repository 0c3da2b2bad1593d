"""Response analyzer.

The measured cents track ``y`` (at the analysis rate) is cut into consecutive
segments of one excitation period ``4N``. Pairs of practically identical
segments are periodized with a cross-fade window, deconvolved by each unit
pulse, un-mixed by the polarity rows and recombined into extended impulse
responses. Averaging over pairs gives the LTI response; the variance over
pairs gives the random (time-varying) response; disagreement between the
three units beyond what the random part explains gives the non-LTI response.

Notation: ``N`` is the unit interval at the analysis rate, the period is
``4N`` and the rfft axis has ``2N + 1`` bins spaced ``rate / (4N)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from modresp.errors import (
    AnalysisError,
    ArgumentError,
    CalibrationError,
    ConfigurationError,
    InsufficientDataError,
)
from modresp.sequence import SLOTS, UNIT_WEIGHTS, SequenceLayout, row_spectrum

DB_FLOOR = -400.0
_POWER_FLOOR = 10.0 ** (DB_FLOOR / 10.0)
MASK_DB = 60.0

# Variance lost to the cross-fade of two independent noise periods, in dB.
COMPENSATION_DB = {"rect": 1.76, "cos": 1.25}


def to_db(power) -> np.ndarray:
    """``10*log10(power)`` with zeros mapped to :data:`DB_FLOOR`."""
    p = np.asarray(power, dtype=float)
    return 10.0 * np.log10(np.maximum(p, _POWER_FLOOR))


def periodizing_window(kind: str, length: int) -> np.ndarray:
    """Rising cross-fade weights with ``w[n] + w[length-1-n] == 1``.

    ``rect`` is the integrated rectangle (a linear ramp); ``cos`` is the
    integrated half-cosine (a raised-cosine ramp).
    """
    t = (np.arange(length) + 0.5) / length
    if kind == "rect":
        return t
    if kind == "cos":
        return 0.5 * (1.0 - np.cos(np.pi * t))
    raise ConfigurationError(f"unknown window kind {kind!r}; use 'rect' or 'cos'")


@dataclass(frozen=True)
class AnalysisConfig:
    sample_rate: float = 44100.0
    unit_interval: int = 24576
    decimation: int = 8
    threshold_db: float = -150.0
    window_kind: str = "rect"
    # "pulse": segment SD on the matched-filtered signal; "cents": raw track
    sd_domain: str = "pulse"
    n_0: int | None = None

    def __post_init__(self):
        if self.decimation < 1 or self.unit_interval % self.decimation:
            raise ConfigurationError(
                f"unit interval {self.unit_interval} is not divisible by decimation {self.decimation}"
            )
        if self.window_kind not in COMPENSATION_DB:
            raise ConfigurationError(f"unknown window kind {self.window_kind!r}")
        if self.sd_domain not in ("pulse", "cents"):
            raise ConfigurationError(f"unknown sd_domain {self.sd_domain!r}")

    @property
    def analysis_rate(self) -> float:
        return self.sample_rate / self.decimation

    @property
    def n_a(self) -> int:
        return self.unit_interval // self.decimation

    @property
    def period(self) -> int:
        return SLOTS * self.n_a

    @property
    def num_bins(self) -> int:
        return 2 * self.n_a + 1

    @property
    def compensation_db(self) -> float:
        return COMPENSATION_DB[self.window_kind]

    @property
    def freq_axis(self) -> np.ndarray:
        return np.arange(self.num_bins) * self.analysis_rate / self.period

    def window(self) -> np.ndarray:
        return periodizing_window(self.window_kind, self.period)

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "unit_interval": self.unit_interval,
            "decimation": self.decimation,
            "analysis_rate": self.analysis_rate,
            "n_a": self.n_a,
            "threshold_db": self.threshold_db,
            "window_kind": self.window_kind,
            "compensation_db": self.compensation_db,
            "sd_domain": self.sd_domain,
            "n_0": self.n_0,
        }


@dataclass
class AnalysisContext:
    """Excitation-dependent quantities shared by every analysis of a run.

    ``unit_spectra[k]`` is unit ``k`` ideally decimated to the analysis rate
    (its spectrum over a full-rate period, truncated to the analysis band and
    divided by the decimation factor). ``excitation_spectrum`` is the
    un-smoothed pulse excitation over one analysis period.
    """
    config: AnalysisConfig
    layout: SequenceLayout
    unit_spectra: np.ndarray
    row_spectra: np.ndarray
    excitation_spectrum: np.ndarray
    # first/last periods are start-up and tail; pairs must lie strictly inside
    steady_segments: tuple[int, int] = (1, 8)

    @classmethod
    def build(cls, units, layout: SequenceLayout, config: AnalysisConfig) -> "AnalysisContext":
        units = list(getattr(units, "units", units))
        if len(units) != 3:
            raise ArgumentError(f"need 3 units, got {len(units)}")
        if layout.unit_interval != config.unit_interval:
            raise ConfigurationError("layout and analysis config disagree on the unit interval")
        full = SLOTS * layout.unit_interval
        spectra = []
        for u in units:
            if float(u.sample_rate) != float(config.sample_rate):
                raise ArgumentError("unit sample rate differs from the analysis config")
            spectra.append(fft.rfft(u.samples, full)[:config.num_bins] / config.decimation)
        spectra = np.array(spectra)
        if np.any(np.abs(spectra) == 0):
            raise CalibrationError("a unit spectrum vanishes inside the analysis band")
        rows = np.array([row_spectrum(r, config.num_bins) for r in np.asarray(layout.polarity)])
        x = np.sum(spectra * rows, axis=0)
        return cls(config, layout, spectra, rows, x, (1, layout.num_periods - 2))

    def unit_pulses(self) -> np.ndarray:
        """Decimated units as period-length (``4N``) time signals."""
        return fft.irfft(self.unit_spectra, self.config.period, axis=1)

    def excitation_period(self) -> np.ndarray:
        return fft.irfft(self.excitation_spectrum, self.config.period)


def decimate_reference(reference_cents, config: AnalysisConfig) -> np.ndarray:
    """Reference track sampled on the analysis grid."""
    return np.asarray(reference_cents, dtype=float)[::config.decimation].copy()


# ---------------------------------------------------------------- segments

@dataclass
class PairSelection:
    pairs: list[int]
    sd_curve: np.ndarray
    n_0: int

    def to_dict(self) -> dict:
        return {"pairs": [int(p) for p in self.pairs],
                "sd_curve_db": [float(v) for v in self.sd_curve], "n_0": int(self.n_0)}


def segment_sd_curve(y, config: AnalysisConfig, context: AnalysisContext | None = None) -> np.ndarray:
    """SD of the difference of consecutive segments, dB re segment RMS.

    Entry ``i`` compares segments ``i`` and ``i+1``. The difference SD is
    divided by sqrt(2), so independent noise of RMS ``s`` reads as ``s``.
    In the pulse domain both segments are first correlated with the three
    units (circularly over one period).
    """
    y = np.asarray(y, dtype=float)
    n = config.period
    count = len(y) // n
    if count < 2:
        return np.empty(0)
    seg = y[:count * n].reshape(count, n)
    if config.sd_domain == "pulse":
        if context is None:
            raise ArgumentError("pulse-domain SD needs an analysis context")
        mf = np.sum(np.conj(context.unit_spectra), axis=0)
        seg = fft.irfft(fft.rfft(seg, axis=1) * mf, n, axis=1)
    diff = np.std(seg[1:] - seg[:-1], axis=1) / math.sqrt(2.0)
    rms = np.sqrt(np.mean(seg[:-1] ** 2, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rms > 0, diff / rms, 0.0)
    return np.maximum(20.0 * np.log10(np.maximum(ratio, 1e-300)), DB_FLOOR)


def select_periodic_pairs(y, config: AnalysisConfig, context: AnalysisContext | None = None,
                          candidates: tuple[int, int] | None = None) -> PairSelection:
    """Segment pairs whose difference SD is below ``threshold_db``.

    Returns start indices (analysis samples) of the first segment of each
    selected pair. ``candidates`` = (first, last) limits the segments that
    may take part, both inclusive; by default the context's steady segments.
    """
    y = np.asarray(y, dtype=float)
    if len(y) < 3 * config.period:
        raise ArgumentError(f"signal has {len(y)} samples; need at least {3 * config.period}")
    curve = segment_sd_curve(y, config, context)
    lo, hi = candidates or (context.steady_segments if context else (0, len(curve)))
    idx = [i for i in range(len(curve)) if lo <= i and i + 1 <= hi and curve[i] < config.threshold_db]
    if not idx:
        raise AnalysisError(
            f"no segment pair below {config.threshold_db} dB (best {curve.min():.1f} dB)", curve
        )
    starts = [i * config.period for i in idx]
    n_0 = config.n_0 if config.n_0 is not None else starts[0]
    return PairSelection(starts, curve, n_0)


# ------------------------------------------------------------- periodize

@dataclass
class PeriodicPair:
    x_tilde: np.ndarray
    y_tilde: np.ndarray
    pair_index: int
    start: int
    window_kind: str


def periodize(signal, start: int, window: np.ndarray) -> np.ndarray:
    """Cross-fade two consecutive periods into one circular period."""
    n = len(window)
    s = np.asarray(signal, dtype=float)
    if start < 0 or start + 2 * n > len(s):
        raise ArgumentError(f"start {start} leaves no room for two periods of {n}")
    return window * s[start:start + n] + window[::-1] * s[start + n:start + 2 * n]


def periodize_pair(x, y, n_0: int, config: AnalysisConfig, pair_index: int = 0) -> PeriodicPair:
    w = config.window()
    return PeriodicPair(periodize(x, n_0, w), periodize(y, n_0, w), pair_index, n_0,
                        config.window_kind)


# ----------------------------------------------------------- separation

@dataclass
class PairResponses:
    """Responses from one periodic pair.

    ``short[k, s]``: slot ``s`` of unit ``k``'s deconvolved signal, sign
    corrected, ``N`` samples centred on the slot's pulse. ``per_unit[k]``:
    unit ``k``'s un-mixed response over one period. ``extended``: weighted
    sum of the per-unit responses.
    """
    short: np.ndarray
    per_unit: np.ndarray
    extended: np.ndarray
    pair_index: int = 0


def separate_impulse_responses(pair: PeriodicPair, context: AnalysisContext) -> PairResponses:
    cfg = context.config
    n, period = cfg.n_a, cfg.period
    rows = np.asarray(context.layout.polarity, dtype=float)
    y_spec = fft.rfft(pair.y_tilde)
    u = context.unit_spectra
    # correlation with each unit, equalized by its (nearly flat) power
    c = fft.irfft(y_spec[None, :] * np.conj(u) / (np.abs(u) ** 2), period, axis=1)
    pre = n // 2
    short = np.empty((3, SLOTS, n))
    per_unit = np.zeros((3, period))
    for k in range(3):
        for s in range(SLOTS):
            idx = (s * n - pre + np.arange(n)) % period
            short[k, s] = rows[k, s] * c[k, idx]
            per_unit[k] += rows[k, s] * np.roll(c[k], -s * n)
    per_unit /= SLOTS
    extended = np.tensordot(np.asarray(UNIT_WEIGHTS), per_unit, axes=1)
    return PairResponses(short, per_unit, extended, pair.pair_index)


# ---------------------------------------------------------- decomposition

@dataclass
class ResponseDecomposition:
    lti_ir: np.ndarray
    lti_spectrum: np.ndarray
    random_power: np.ndarray
    nonlti_power: np.ndarray
    freq_axis: np.ndarray
    compensation_db: float
    n_pairs: int
    n_short_responses: int
    extended: np.ndarray
    calibrated: bool = False


def pair_noise_factors(window: np.ndarray, starts, period: int) -> tuple[float, float]:
    """Corrections for noise shared by pairs that overlap by one period.

    With independent noise per period, pair ``p`` holds ``w*z_p + w'*z_{p+1}``
    so neighbouring pairs are correlated. Returns ``(overlap, mean_ratio)``:
    ``overlap`` scales the sample variance over pairs to the variance of a
    single (un-faded) pair with independent periods divided by the fade loss;
    ``mean_ratio`` is the variance of the pair mean over the expected value of
    ``sample_variance / P``.
    """
    p = len(starts)
    v = np.mean(window ** 2 + window[::-1] ** 2)
    c = np.mean(window * window[::-1])
    cov = np.eye(p) * v
    for i in range(p):
        for j in range(p):
            if starts[j] - starts[i] == period:
                cov[i, j] = cov[j, i] = c
    total = cov.sum()
    expected_s2 = (np.trace(cov) - total / p) / (p - 1)
    return float(v / expected_s2), float((total / p ** 2) / (expected_s2 / p))


def _centred_window(resp: np.ndarray, n: int) -> np.ndarray:
    """Keep ``n`` samples centred on circular time 0, zero elsewhere."""
    out = np.zeros_like(resp)
    idx = np.arange(-(n // 2), n - n // 2)
    out[..., idx] = resp[..., idx]
    return out


def decompose(slices, context: AnalysisContext, starts=None) -> ResponseDecomposition:
    """Average, variance and cross-unit contrast over the pair responses."""
    slices = list(slices)
    p = len(slices)
    if p < 2:
        raise InsufficientDataError(f"{p} periodic pairs; need at least 2")
    cfg = context.config
    ext = np.array([s.extended for s in slices])
    spec = fft.rfft(ext, axis=1)
    lti_spec = spec.mean(axis=0)
    if starts is None:
        starts = [s.pair_index * cfg.period for s in slices]
    overlap, mean_ratio = pair_noise_factors(cfg.window(), starts, cfg.period)
    comp = 10.0 ** (cfg.compensation_db / 10.0)
    random_power = np.var(spec, axis=0, ddof=1) * overlap * comp

    per_unit = np.array([s.per_unit for s in slices])  # (p, 3, 4N)
    h = fft.rfft(_centred_window(per_unit, cfg.n_a), axis=2)
    unit_means = h.mean(axis=0)
    between = np.var(unit_means, axis=0, ddof=1)
    within = np.var(h, axis=0, ddof=1).mean(axis=0)
    nonlti = np.maximum(between - mean_ratio * within / p, 0.0)
    return ResponseDecomposition(
        lti_ir=ext.mean(axis=0),
        lti_spectrum=lti_spec,
        random_power=random_power,
        nonlti_power=nonlti,
        freq_axis=cfg.freq_axis,
        compensation_db=cfg.compensation_db,
        n_pairs=p,
        n_short_responses=int(sum(s.short.shape[0] * s.short.shape[1] for s in slices)),
        extended=ext,
    )


def analyze(y, context: AnalysisContext, x=None, selection: PairSelection | None = None):
    """Full analysis of an analysis-rate track.

    ``x`` is the analysis-rate reference (periodized alongside ``y``; only
    used for :class:`PeriodicPair` bookkeeping). Without ``selection`` the
    pairs are chosen from ``y`` itself.

    Returns ``(decomposition, selection, pair_responses)``.
    """
    cfg = context.config
    y = np.asarray(y, dtype=float)
    if selection is None:
        selection = select_periodic_pairs(y, cfg, context)
    need = max(selection.pairs) + 2 * cfg.period
    if len(y) < need:
        raise InsufficientDataError(f"track has {len(y)} samples; selected pairs need {need}")
    x = y if x is None else np.asarray(x, dtype=float)
    slices = []
    for start in selection.pairs:
        pair = periodize_pair(x, y, start, cfg, pair_index=start // cfg.period)
        slices.append(separate_impulse_responses(pair, context))
    return decompose(slices, context, selection.pairs), selection, slices


# ------------------------------------------------------------ calibration

@dataclass
class Calibration:
    reference: np.ndarray
    decomposition: ResponseDecomposition
    selection: PairSelection
    mask: np.ndarray  # True where usable

    @property
    def masked_above_hz(self) -> float:
        f = self.decomposition.freq_axis
        bad = np.flatnonzero(~self.mask[1:])
        return float(f[bad[0]]) if bad.size else float(f[-1])


def calibrate(reference_cents, context: AnalysisContext) -> Calibration:
    """Analyse the reference itself (the test system without an extractor)."""
    ref = decimate_reference(reference_cents, context.config)
    decomp, sel, _ = analyze(ref, context)
    power = np.abs(decomp.lti_spectrum) ** 2
    peak = power.max()
    if not peak > 0:
        raise CalibrationError("calibration response is zero everywhere")
    mask = to_db(power) >= to_db(peak) - MASK_DB
    # a band is contiguous from DC; the first masked bin ends it
    first_bad = np.flatnonzero(~mask)
    if first_bad.size:
        mask[first_bad[0]:] = False
    return Calibration(ref, decomp, sel, mask)


@dataclass
class CalibratedResponse:
    freq_hz: np.ndarray
    gain_db: np.ndarray
    random_db: np.ndarray
    nonlti_db: np.ndarray
    masked_above_hz: float
    n_pairs: int
    n_short_responses: int
    compensation_db: float
    lti_ir: np.ndarray = field(repr=False, default=None)
    sd_curve_db: np.ndarray = field(repr=False, default=None)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "freq_hz": [round(float(v), 10) for v in self.freq_hz],
            "gain_db": [float(v) for v in self.gain_db],
            "random_db": [float(v) for v in self.random_db],
            "nonlti_db": [float(v) for v in self.nonlti_db],
            "n_pairs": int(self.n_pairs),
            "n_short_responses": int(self.n_short_responses),
            "compensation_db": float(self.compensation_db),
            "masked_above_hz": float(self.masked_above_hz),
        }
        if self.sd_curve_db is not None:
            doc["sd_curve_db"] = [float(v) for v in self.sd_curve_db]
        if self.meta:
            doc["meta"] = self.meta
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CalibratedResponse":
        d = json.loads(text)
        sd = d.get("sd_curve_db")
        return cls(np.array(d["freq_hz"]), np.array(d["gain_db"]), np.array(d["random_db"]),
                   np.array(d["nonlti_db"]), float(d["masked_above_hz"]), int(d["n_pairs"]),
                   int(d["n_short_responses"]), float(d["compensation_db"]),
                   sd_curve_db=None if sd is None else np.array(sd), meta=d.get("meta", {}))

    def to_csv(self) -> str:
        lines = ["freq_hz,gain_db,random_db,nonlti_db"]
        for row in zip(self.freq_hz, self.gain_db, self.random_db, self.nonlti_db):
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def calibrate_and_normalize(target: ResponseDecomposition, calibration: Calibration,
                            sd_curve=None) -> CalibratedResponse:
    """Normalize a target decomposition by the calibration response.

    Gain is ``|L_t| / |L_c|``; the random and non-LTI powers are divided by
    ``|L_c|**2``. Only bins inside the calibration mask are returned.
    """
    cal = calibration.decomposition
    if target.lti_spectrum.shape != cal.lti_spectrum.shape:
        raise CalibrationError("target and calibration use different analysis settings")
    m = calibration.mask
    lc = np.abs(cal.lti_spectrum[m])
    lc2 = lc ** 2
    gain = np.abs(target.lti_spectrum[m]) / lc
    return CalibratedResponse(
        freq_hz=target.freq_axis[m],
        gain_db=to_db(gain ** 2),
        random_db=to_db(target.random_power[m] / lc2),
        nonlti_db=to_db(target.nonlti_power[m] / lc2),
        masked_above_hz=calibration.masked_above_hz,
        n_pairs=target.n_pairs,
        n_short_responses=target.n_short_responses,
        compensation_db=target.compensation_db,
        lti_ir=target.lti_ir,
        sd_curve_db=sd_curve,
    )


def measure_track(y, calibration: Calibration, context: AnalysisContext) -> CalibratedResponse:
    """Analyse a target track on the calibration's pairs and normalize it."""
    y = np.asarray(y, dtype=float)
    curve = segment_sd_curve(y, context.config, context)
    decomp, _, _ = analyze(y, context, calibration.reference, calibration.selection)
    return calibrate_and_normalize(decomp, calibration, curve)
