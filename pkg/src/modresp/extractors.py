"""Pitch extractors under test and the adapter for external executables.

Built-in extractors analyse 40 ms frames every 10 ms:

``ncf``
    normalized autocorrelation peak
``yin``
    cumulative-mean-normalized difference with an absolute threshold
``cep``
    real-cepstrum quefrency peak
``identity``
    fixture returning the true modulation track, optionally smoothed by a
    boxcar, bent by ``x + alpha*x**2``, scaled, or corrupted by white noise

External extractors are command templates with ``{input}`` and ``{output}``
placeholders. The command reads a mono 24-bit WAV and writes UTF-8 CSV lines
``time_sec,f0_hz``; f0 values that are empty, NaN or <= 0 mark unvoiced
frames.
"""
from __future__ import annotations

import math
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft

from modresp.errors import (
    ArgumentError,
    ConfigurationError,
    ExtractorFailure,
    InsufficientDataError,
    TrackParseError,
)
from modresp.kernels import yin_pick

BUILTIN_KINDS = ("ncf", "cep", "yin", "identity")
SILENCE_ENERGY = 1e-20
# a shorter-lag peak this close to the best one wins (sub-octave guard)
OCTAVE_RATIO = 0.95

_DEFAULTS = {
    "frame_interval_s": 0.01,
    "window_s": 0.04,
    "search_low_hz": 60.0,
    "search_high_hz": 1000.0,
    "interpolate": True,
}
_KIND_DEFAULTS = {
    "ncf": {"voicing": 0.5},
    "yin": {"threshold": 0.1, "voicing": 0.5},
    # the Hann-tapered cepstrum needs about four periods at the lowest carrier
    "cep": {"voicing": 0.08, "window_s": 0.05},
    # frame_interval_s None means one frame per analysis sample
    "identity": {"frame_interval_s": None, "decimation": 8, "boxcar_s": 0.0,
                 "quad_alpha": 0.0, "scale": 1.0, "noise_cents": 0.0, "noise_seed": 0},
}


@dataclass
class PitchTrack:
    times: np.ndarray
    f0: np.ndarray
    source: str = ""
    frame_interval: float = 0.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.f0 = np.asarray(self.f0, dtype=float)
        if self.times.shape != self.f0.shape or self.times.ndim != 1:
            raise ArgumentError("times and f0 must be 1-D and equally long")
        if np.any(np.diff(self.times) <= 0):
            raise ArgumentError("track times must be strictly increasing")

    @property
    def voiced(self) -> np.ndarray:
        return np.isfinite(self.f0) & (self.f0 > 0)

    @property
    def voiced_fraction(self) -> float:
        return float(self.voiced.mean()) if self.f0.size else 0.0


@dataclass
class ExtractorSpec:
    kind: str
    params: dict = field(default_factory=dict)
    command: str | None = None
    name: str | None = None

    def __post_init__(self):
        if self.kind == "external":
            if not self.command or "{input}" not in self.command or "{output}" not in self.command:
                raise ConfigurationError("external command needs {input} and {output} placeholders")
            return
        if self.kind not in BUILTIN_KINDS:
            raise ConfigurationError(f"unknown extractor kind {self.kind!r}")
        unknown = set(self.params) - set(_DEFAULTS) - set(_KIND_DEFAULTS[self.kind])
        if unknown:
            raise ConfigurationError(f"unknown {self.kind} parameters: {sorted(unknown)}")
        p = self.resolved()
        if p["frame_interval_s"] is not None and not p["frame_interval_s"] > 0:
            raise ConfigurationError("frame_interval_s must be positive")
        if not 0 < p["search_low_hz"] < p["search_high_hz"]:
            raise ConfigurationError("need 0 < search_low_hz < search_high_hz")

    def resolved(self) -> dict:
        p = dict(_DEFAULTS)
        p.update(_KIND_DEFAULTS.get(self.kind, {}))
        p.update(self.params)
        return p

    @property
    def id(self) -> str:
        if self.name:
            return self.name
        if self.kind == "external":
            word = Path(shlex.split(self.command)[0]).name
            return "ext-" + "".join(c if c.isalnum() else "_" for c in word)
        if not self.params:
            return self.kind
        extra = "_".join(f"{k}-{v}" for k, v in sorted(self.params.items()))
        return f"{self.kind}_{extra}".replace(".", "p")


def _parse_value(text: str):
    low = text.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    try:
        return int(low)
    except ValueError:
        pass
    try:
        return float(low)
    except ValueError:
        return text.strip()


def parse_extractor(text: str) -> ExtractorSpec:
    """Parse ``builtin:<kind>[:k=v,...]`` or ``external:<command template>``.

    A ``name=`` key in the builtin parameters overrides the generated id.
    """
    head, _, rest = text.partition(":")
    if head == "external":
        return ExtractorSpec("external", command=rest)
    if head != "builtin" or not rest:
        raise ConfigurationError(f"cannot parse extractor spec {text!r}")
    kind, _, opts = rest.partition(":")
    params, name = {}, None
    for item in filter(None, (s.strip() for s in opts.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigurationError(f"bad extractor option {item!r}")
        if key == "name":
            name = val
        else:
            params[key.strip()] = _parse_value(val)
    return ExtractorSpec(kind, params, name=name)


def frame_times(duration_s: float, interval: float) -> np.ndarray:
    count = int(math.floor(duration_s / interval + 1e-9)) + 1
    return np.arange(count) * interval


def _frames(audio, centers, start_offset, width):
    pad = width + abs(start_offset) + 1
    padded = np.concatenate([np.zeros(pad), audio, np.zeros(pad)])
    idx = (centers + start_offset + pad)[:, None] + np.arange(width)[None, :]
    return padded[idx]


def _lag_range(p, rate):
    lo = max(2, int(math.floor(rate / p["search_high_hz"])))
    hi = int(math.ceil(rate / p["search_low_hz"]))
    return lo, hi


def _parabolic(r, lags):
    """Vertex offsets of parabolas through ``r[i, lag-1..lag+1]``."""
    rows = np.arange(len(lags))
    a, b, c = r[rows, lags - 1], r[rows, lags], r[rows, lags + 1]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        den = a - 2.0 * b + c
        off = np.where(den != 0, 0.5 * (a - c) / den, 0.0)
    return np.clip(off, -0.5, 0.5)


def _ncf_block(frames, w, lo, hi, p):
    x0 = frames[:, :w]
    n = fft.next_fast_len(frames.shape[1], real=True)
    corr = fft.irfft(fft.rfft(frames, n, axis=1) * np.conj(fft.rfft(x0, n, axis=1)),
                     n, axis=1)[:, :hi + 2]
    sq = np.concatenate([np.zeros((len(frames), 1)), np.cumsum(frames ** 2, axis=1)], axis=1)
    lags = np.arange(hi + 2)
    e_shift = sq[:, lags + w] - sq[:, lags]
    e0 = sq[:, w][:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = corr / np.sqrt(e0 * e_shift)
    r = np.nan_to_num(r, nan=0.0)
    seg = r[:, lo:hi + 1]
    best = np.max(seg, axis=1)
    # smallest lag within 5% of the best peak guards against period doubling
    local = np.zeros_like(seg, dtype=bool)
    local[:, 1:-1] = (seg[:, 1:-1] >= seg[:, :-2]) & (seg[:, 1:-1] >= seg[:, 2:])
    ok = local & (seg >= OCTAVE_RATIO * best[:, None])
    first = np.where(ok.any(axis=1), np.argmax(ok, axis=1), np.argmax(seg, axis=1))
    lag = lo + first
    period = lag.astype(float)
    if p["interpolate"]:
        period = period + _parabolic(r, lag)
    voiced = (best >= p["voicing"]) & (e0[:, 0] > SILENCE_ENERGY)
    return period, voiced


def _yin_block(frames, w, lo, hi, p):
    x0 = frames[:, :w]
    n = fft.next_fast_len(frames.shape[1], real=True)
    corr = fft.irfft(fft.rfft(frames, n, axis=1) * np.conj(fft.rfft(x0, n, axis=1)),
                     n, axis=1)[:, :hi + 2]
    sq = np.concatenate([np.zeros((len(frames), 1)), np.cumsum(frames ** 2, axis=1)], axis=1)
    lags = np.arange(hi + 2)
    e_shift = sq[:, lags + w] - sq[:, lags]
    e0 = sq[:, w][:, None]
    d = np.maximum(e0 + e_shift - 2.0 * corr, 0.0)
    d[:, 0] = 0.0
    csum = np.cumsum(d[:, 1:], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cmnd = np.ones_like(d)
        cmnd[:, 1:] = d[:, 1:] * np.arange(1, d.shape[1]) / csum
    cmnd = np.ascontiguousarray(np.nan_to_num(cmnd, nan=1.0, posinf=1.0))
    lag, refined = yin_pick(cmnd, lo, hi, float(p["threshold"]))
    # no dip under the threshold: fall back to the global minimum
    miss = np.flatnonzero(lag < 0)
    if miss.size:
        glob = lo + np.argmin(cmnd[miss, lo:hi + 1], axis=1)
        lag[miss] = glob
        refined[miss] = glob + _parabolic(cmnd[miss], glob)
    rows = np.arange(len(lag))
    period = refined if p["interpolate"] else lag.astype(float)
    voiced = (cmnd[rows, lag] <= p["voicing"]) & (e0[:, 0] > SILENCE_ENERGY)
    return period, voiced


def _cep_block(frames, w, lo, hi, p):
    x = frames[:, :w] * np.hanning(w)[None, :]
    n = fft.next_fast_len(2 * w, real=True)
    mag = np.abs(fft.rfft(x, n, axis=1))
    floor = 1e-12 * np.maximum(mag.max(axis=1, keepdims=True), 1e-300)
    ceps = fft.irfft(np.log(np.maximum(mag, floor)), n, axis=1)
    hi = min(hi, n // 2 - 2)
    seg = ceps[:, lo:hi + 1]
    lag = lo + np.argmax(seg, axis=1)
    period = lag.astype(float)
    if p["interpolate"]:
        period = period + _parabolic(ceps, lag)
    energy = np.sum(frames[:, :w] ** 2, axis=1)
    voiced = (seg.max(axis=1) >= p["voicing"]) & (energy > SILENCE_ENERGY)
    return period, voiced


_BLOCKS = {"ncf": _ncf_block, "yin": _yin_block, "cep": _cep_block}


def _identity_track(p, reference, carrier_f0, rate, source):
    ref = np.asarray(reference, dtype=float)
    width = int(round(p["boxcar_s"] * rate))
    if width > 1:
        # centered moving average; edges see zero padding
        ref = np.convolve(ref, np.ones(width) / width, mode="same")
    if p["quad_alpha"]:
        ref = ref + p["quad_alpha"] * ref * ref
    ref = ref * p["scale"]
    interval = p["frame_interval_s"]
    if interval is None:
        interval = p["decimation"] / rate
    times = frame_times((len(ref) - 1) / rate, interval)
    pos = times * rate
    idx = np.round(pos)
    if np.allclose(pos, idx, rtol=0, atol=1e-6):
        cents = ref[idx.astype(int)]
    else:
        cents = np.interp(pos, np.arange(len(ref)), ref)
    if p["noise_cents"]:
        rng = np.random.default_rng(p["noise_seed"])
        cents = cents + p["noise_cents"] * rng.standard_normal(len(cents))
    return PitchTrack(times, carrier_f0 * np.exp2(cents / 1200.0), source, interval)


def run_builtin(spec: ExtractorSpec, audio, rate: float, reference=None,
                carrier_f0: float | None = None, block: int = 256) -> PitchTrack:
    """Run a built-in extractor on ``audio`` sampled at ``rate``.

    ``identity`` ignores the audio and needs the true cents track
    (``reference``, at ``rate``) and ``carrier_f0``.
    """
    if spec.kind not in BUILTIN_KINDS:
        raise ArgumentError(f"{spec.kind!r} is not a built-in extractor")
    audio = np.asarray(audio, dtype=float)
    if audio.size == 0:
        raise ArgumentError("audio is empty")
    p = spec.resolved()
    if spec.kind == "identity":
        if reference is None or carrier_f0 is None:
            raise ArgumentError("identity extractor needs the reference track and carrier")
        return _identity_track(p, reference, carrier_f0, rate, spec.id)
    if not p["search_high_hz"] < 0.5 * rate:
        raise ArgumentError("search range must lie below Nyquist")
    interval = p["frame_interval_s"]
    times = frame_times((len(audio) - 1) / rate, interval)
    centers = np.round(times * rate).astype(int)
    w = int(round(p["window_s"] * rate))
    lo, hi = _lag_range(p, rate)
    width = w + hi + 2
    func = _BLOCKS[spec.kind]
    period = np.empty(len(times))
    voiced = np.empty(len(times), dtype=bool)
    for s in range(0, len(times), block):
        fr = _frames(audio, centers[s:s + block], -(w // 2), width)
        period[s:s + block], voiced[s:s + block] = func(fr, w, lo, hi, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        f0 = np.where(voiced & (period > 0), rate / period, np.nan)
    return PitchTrack(times, f0, spec.id, interval)


def parse_track_csv(text: str, source: str = "") -> PitchTrack:
    """Parse ``time_sec,f0_hz`` lines; an initial non-numeric header is skipped."""
    times, f0 = [], []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = [s.strip() for s in line.split(",")]
        if len(parts) != 2:
            if not times and number == 1:
                continue
            raise TrackParseError(f"expected 2 fields, got {len(parts)}", number)
        try:
            t = float(parts[0])
        except ValueError:
            if not times and number == 1:
                continue  # header
            raise TrackParseError(f"bad time {parts[0]!r}", number) from None
        try:
            v = float(parts[1]) if parts[1] else math.nan
        except ValueError:
            raise TrackParseError(f"bad f0 {parts[1]!r}", number) from None
        if not math.isfinite(t):
            raise TrackParseError(f"bad time {parts[0]!r}", number)
        if times and t <= times[-1]:
            raise TrackParseError("times must increase", number)
        times.append(t)
        f0.append(v if v > 0 else math.nan)
    if not times:
        raise TrackParseError("extractor produced no frames")
    interval = float(np.median(np.diff(times))) if len(times) > 1 else 0.0
    return PitchTrack(np.array(times), np.array(f0), source, interval)


def run_external(spec: ExtractorSpec, wav_path, workdir, timeout: float | None = None) -> PitchTrack:
    """Run an external extractor on ``wav_path`` and parse its CSV output."""
    if spec.kind != "external":
        raise ArgumentError("run_external needs an external extractor spec")
    workdir = Path(workdir)
    out_path = workdir / (Path(wav_path).stem + ".f0.csv")
    if out_path.exists():
        out_path.unlink()
    args = [tok.replace("{input}", str(wav_path)).replace("{output}", str(out_path))
            for tok in shlex.split(spec.command)]
    proc = subprocess.run(args, cwd=workdir, capture_output=True, text=True, timeout=timeout)
    if proc.returncode != 0:
        raise ExtractorFailure(spec.command, proc.returncode, proc.stderr)
    if not out_path.exists():
        raise TrackParseError(f"extractor wrote no output file {out_path.name}")
    return parse_track_csv(out_path.read_text(encoding="utf-8"), spec.command)


def unvoiced_spans(track: PitchTrack) -> list[tuple[float, float]]:
    """(start, end) times of runs of unvoiced frames."""
    spans, start = [], None
    for t, v in zip(track.times, track.voiced):
        if not v and start is None:
            start = t
        elif v and start is not None:
            spans.append((float(start), float(t)))
            start = None
    if start is not None:
        spans.append((float(start), float(track.times[-1])))
    return spans


def track_to_cents(track: PitchTrack, carrier_f0: float, analysis_rate: float,
                   duration_s: float) -> np.ndarray:
    """Resample a pitch track to a uniform cents signal.

    Voiced frames are converted to ``1200*log2(f0/carrier)`` and linearly
    interpolated onto ``round(duration_s*analysis_rate)`` samples; unvoiced
    gaps are bridged (see :func:`unvoiced_spans`) and the ends are held.
    """
    voiced = track.voiced
    if voiced.sum() < 2:
        raise InsufficientDataError(f"{voiced.sum()} voiced frames; need at least 2")
    cents = 1200.0 * np.log2(track.f0[voiced] / carrier_f0)
    n = int(round(duration_s * analysis_rate))
    grid = np.arange(n) / analysis_rate
    t = track.times[voiced]
    pos = grid
    # exact knot hits for tracks already on the analysis grid
    if len(t) == n and np.allclose(t, grid, rtol=0, atol=1e-9 / analysis_rate):
        return cents.copy()
    return np.interp(pos, t, cents)
