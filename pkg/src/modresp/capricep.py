"""Unit time-stretched pulses built from randomized all-pass cascades.

A unit is the impulse response of ``num_sections`` second-order all-pass
sections whose center frequencies are drawn at random and whose phase
polarity is randomized: a section with polarity -1 is applied time-reversed,
so its group delay is negated. Group-delay bumps of both signs keep the
response compact while scattering the energy in time. The response is cut to
``duration_s`` at the position retaining the most energy and normalized to
unit energy.
"""
from __future__ import annotations

import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import fft

from modresp.errors import ArgumentError, ConfigurationError
from modresp.kernels import allpass_cascade

LOWEST_CENTER_HZ = 20.0


@dataclass(frozen=True)
class UnitConfig:
    num_sections: int = 440
    duration_s: float = 0.5
    sample_rate: float = 44100.0
    pole_radius: float = 0.998
    # upper edge of the center-frequency draw, as a fraction of sample_rate
    max_center: float = 0.5
    # share of sections placed log-uniformly in the low band with constant Q;
    # fixed-radius sections are too sparse there to disperse the modulation band
    low_fraction: float = 0.1
    low_band_hz: tuple[float, float] = (20.0, 200.0)
    low_q: float = 3.0
    # units whose truncated magnitude deviates more than this are redrawn
    max_flatness_db: float = 0.4
    max_attempts: int = 64

    def __post_init__(self):
        if self.num_sections < 0:
            raise ConfigurationError("num_sections must be >= 0")
        if not self.duration_s > 0 or self.duration_s * self.sample_rate < 1:
            raise ConfigurationError(
                f"duration_s={self.duration_s} gives no samples at {self.sample_rate} Hz"
            )
        if not 0 < self.pole_radius < 1:
            raise ConfigurationError("pole_radius must lie in (0, 1)")
        if not 0 < self.max_center <= 0.5:
            raise ConfigurationError("max_center must lie in (0, 0.5]")
        if not 0 <= self.low_fraction <= 1:
            raise ConfigurationError("low_fraction must lie in [0, 1]")
        lo, hi = self.low_band_hz
        if not 0 < lo < hi < 0.5 * self.sample_rate or not self.low_q > 0:
            raise ConfigurationError("need 0 < low band < Nyquist and low_q > 0")
        if self.max_attempts < 1:
            raise ConfigurationError("max_attempts must be >= 1")

    @property
    def length(self) -> int:
        return int(round(self.duration_s * self.sample_rate))

    @property
    def num_low(self) -> int:
        return int(round(self.low_fraction * self.num_sections))


@dataclass
class UnitCapricep:
    samples: np.ndarray
    sample_rate: float
    seed: int
    id: int = 0
    config: UnitConfig = field(default_factory=UnitConfig)

    @property
    def length_samples(self) -> int:
        return len(self.samples)

    def __neg__(self) -> "UnitCapricep":
        return UnitCapricep(-self.samples, self.sample_rate, self.seed, self.id, self.config)


def section_parameters(seed: int, config: UnitConfig, attempt: int = 0):
    """Center frequencies (Hz), pole radii and polarities drawn for ``seed``."""
    rng = np.random.default_rng([int(seed), int(attempt)])
    n_low = config.num_low
    n_lin = config.num_sections - n_low
    high = config.max_center * config.sample_rate
    lin = rng.uniform(LOWEST_CENTER_HZ, high, n_lin)
    lo, hi = config.low_band_hz
    low = np.exp(rng.uniform(np.log(lo), np.log(hi), n_low))
    centers = np.concatenate([lin, low])
    radii = np.concatenate([
        np.full(n_lin, config.pole_radius),
        1.0 - np.pi * (low / config.low_q) / config.sample_rate,
    ])
    polarity = rng.choice(np.array([-1, 1]), config.num_sections)
    return centers, radii, polarity


def _coefficients(centers, radius, sample_rate):
    theta = 2.0 * np.pi * np.asarray(centers, dtype=float) / sample_rate
    radius = np.broadcast_to(np.asarray(radius, dtype=float), theta.shape)
    a1 = -2.0 * radius * np.cos(theta)
    a2 = radius * radius
    return np.ascontiguousarray(a1), np.ascontiguousarray(a2)


def flatness_db(samples, sample_rate: float, band=(10.0, None)) -> float:
    """Largest deviation (dB) of the magnitude spectrum from its mean dB level.

    The band defaults to [10 Hz, 0.45 * sample_rate].
    """
    n = fft.next_fast_len(4 * len(samples), real=True)
    mag = np.abs(fft.rfft(samples, n))
    f = np.arange(len(mag)) * sample_rate / n
    hi = band[1] if band[1] is not None else 0.45 * sample_rate
    sel = (f >= band[0]) & (f <= hi)
    db = 20.0 * np.log10(np.maximum(mag[sel], 1e-300))
    return float(np.max(np.abs(db - db.mean())))


def _render(seed, config, attempt):
    length = config.length
    centers, radii, polarity = section_parameters(seed, config, attempt)
    a1, a2 = _coefficients(centers, radii, config.sample_rate)

    # both tails of the two-sided response must fit in the work buffer
    margin = 2 * length
    buf = np.zeros(2 * margin + length)
    buf[margin] = 1.0
    fwd = polarity > 0
    buf = allpass_cascade(buf, a1[fwd], a2[fwd])
    buf = allpass_cascade(np.ascontiguousarray(buf[::-1]), a1[~fwd], a2[~fwd])[::-1]

    energy = np.concatenate(([0.0], np.cumsum(buf * buf)))
    kept = energy[length:] - energy[:-length]
    # among windows keeping (numerically) all the energy, take the one that
    # starts closest to the impulse position
    candidates = np.flatnonzero(kept >= kept.max() - 1e-12 * energy[-1])
    start = int(candidates[np.argmin(np.abs(candidates - margin))])
    samples = buf[start:start + length].copy()
    return samples / np.sqrt(np.sum(samples * samples))


def generate_unit(seed: int, config: UnitConfig | None = None, id: int = 0) -> UnitCapricep:
    """Generate one unit pulse; deterministic given ``seed`` and ``config``.

    Draws whose truncation spoils the flat magnitude (the random group delays
    pile up beyond ``duration_s``) are replaced by the next draw of the same
    seed.
    """
    config = config or UnitConfig()
    for attempt in range(config.max_attempts):
        samples = _render(seed, config, attempt)
        if config.num_sections == 0 or \
                flatness_db(samples, config.sample_rate) <= config.max_flatness_db:
            return UnitCapricep(samples, config.sample_rate, int(seed), id, config)
    raise ConfigurationError(
        f"no draw of seed {seed} met the {config.max_flatness_db} dB flatness limit "
        f"in {config.max_attempts} attempts"
    )


def _generate_many(args):
    seeds, config = args
    return [generate_unit(int(s), config, id=i).samples for i, s in seeds]


def candidate_seeds(base_seed: int, count: int) -> np.ndarray:
    """Per-candidate seeds derived from one run seed."""
    return np.random.SeedSequence(base_seed).generate_state(count).astype(np.int64)


def generate_candidates(count: int, base_seed: int = 0, config: UnitConfig | None = None,
                        jobs: int = 1) -> list[UnitCapricep]:
    """Generate ``count`` candidate units, optionally across processes."""
    config = config or UnitConfig()
    seeds = candidate_seeds(base_seed, count)
    indexed = list(enumerate(seeds))
    if jobs <= 1 or count < 8:
        chunks = [_generate_many((indexed, config))]
    else:
        size = -(-count // (jobs * 4))
        parts = [(indexed[i:i + size], config) for i in range(0, count, size)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_generate_many, parts))
    samples = list(itertools.chain.from_iterable(chunks))
    return [UnitCapricep(s, config.sample_rate, int(seeds[i]), i, config)
            for i, s in enumerate(samples)]


def matched_filter(unit: UnitCapricep, signal) -> np.ndarray:
    """Correlate ``signal`` with ``unit`` (convolution with the time-reversed unit).

    Output index ``m`` holds the correlation at lag ``m``, so ``signal == unit``
    peaks at index 0 and a copy delayed by ``m`` samples peaks at index ``m``.
    """
    signal = np.asarray(signal, dtype=float)
    u = unit.samples
    if signal.ndim != 1 or len(signal) < len(u):
        raise ArgumentError(
            f"signal length {signal.size} is shorter than the unit ({len(u)} samples)"
        )
    n = fft.next_fast_len(len(signal) + len(u) - 1, real=True)
    spec = fft.rfft(signal, n) * np.conj(fft.rfft(u, n))
    return fft.irfft(spec, n)[:len(signal)]


def _check_pair(a: UnitCapricep, b: UnitCapricep):
    if a.sample_rate != b.sample_rate:
        raise ArgumentError(f"sample rates differ: {a.sample_rate} vs {b.sample_rate}")
    if a.length_samples != b.length_samples:
        raise ArgumentError(f"lengths differ: {a.length_samples} vs {b.length_samples}")


def _peak_db(spec_a, spec_b, n, norm):
    c = fft.irfft(spec_a * np.conj(spec_b), n, axis=-1)
    peak = np.max(np.abs(c), axis=-1) / norm
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(peak)


def crosstalk(a: UnitCapricep, b: UnitCapricep) -> float:
    """Peak absolute cross-correlation of two unit-energy pulses, in dB (<= 0)."""
    _check_pair(a, b)
    n = fft.next_fast_len(2 * a.length_samples - 1, real=True)
    norm = np.sqrt(np.sum(a.samples ** 2) * np.sum(b.samples ** 2))
    return float(min(_peak_db(fft.rfft(a.samples, n), fft.rfft(b.samples, n), n, norm), 0.0))


def crosstalk_matrix(units) -> np.ndarray:
    """All-pairs crosstalk in dB; the diagonal is 0."""
    units = list(units)
    for u in units[1:]:
        _check_pair(units[0], u)
    n = fft.next_fast_len(2 * units[0].length_samples - 1, real=True)
    specs = [fft.rfft(u.samples, n) for u in units]
    energy = [np.sum(u.samples ** 2) for u in units]
    out = np.zeros((len(units), len(units)))
    for i, j in itertools.combinations(range(len(units)), 2):
        v = min(float(_peak_db(specs[i], specs[j], n, np.sqrt(energy[i] * energy[j]))), 0.0)
        out[i, j] = out[j, i] = v
    return out


@dataclass
class CapricepSet:
    """Selected pool of units; the first three of ``active`` are A, B and C."""

    pool: list[UnitCapricep]
    active: tuple[int, ...]
    crosstalk_db: np.ndarray
    candidate_pool_size: int
    base_seed: int = 0
    config: UnitConfig = field(default_factory=UnitConfig)

    @property
    def units(self) -> list[UnitCapricep]:
        return [self.pool[i] for i in self.active]

    @property
    def max_crosstalk_db(self) -> float:
        sub = self.crosstalk_db[np.ix_(self.active, self.active)]
        return float(np.max(sub[~np.eye(len(self.active), dtype=bool)]))

    @property
    def degenerate(self) -> bool:
        """True when two active units are indistinguishable (0 dB crosstalk)."""
        return self.max_crosstalk_db >= -1e-9

    def to_json(self) -> str:
        doc = {
            "config": asdict(self.config),
            "base_seed": int(self.base_seed),
            "candidate_pool_size": int(self.candidate_pool_size),
            "pool_seeds": [int(u.seed) for u in self.pool],
            "pool_ids": [int(u.id) for u in self.pool],
            "active": [int(i) for i in self.active],
            "crosstalk_db": [[float(v) for v in row] for row in self.crosstalk_db],
            "max_crosstalk_db": self.max_crosstalk_db,
            "degenerate": self.degenerate,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CapricepSet":
        """Rebuild a set by regenerating its units from the stored seeds."""
        doc = json.loads(text)
        cfg = dict(doc["config"])
        cfg["low_band_hz"] = tuple(cfg.get("low_band_hz", UnitConfig.low_band_hz))
        config = UnitConfig(**cfg)
        pool = [generate_unit(s, config, id=i)
                for s, i in zip(doc["pool_seeds"], doc["pool_ids"])]
        return cls(pool, tuple(doc["active"]), np.array(doc["crosstalk_db"], dtype=float),
                   doc["candidate_pool_size"], doc.get("base_seed", 0), config)


def select_set(candidates, pool_size: int = 10, active: int = 3,
               base_seed: int = 0) -> CapricepSet:
    """Greedy low-crosstalk pool selection followed by an exhaustive best subset.

    The pool starts from candidate 0 and repeatedly adds the candidate whose
    worst crosstalk against the units already chosen is smallest (ties go to
    the lowest index). The ``active`` units are the subset of the pool with
    the smallest maximum pairwise crosstalk.
    """
    candidates = list(candidates)
    if not 1 <= active <= pool_size:
        raise ArgumentError(f"need 1 <= active ({active}) <= pool_size ({pool_size})")
    if pool_size > len(candidates):
        raise ArgumentError(f"pool_size {pool_size} exceeds {len(candidates)} candidates")
    for u in candidates[1:]:
        _check_pair(candidates[0], u)

    n = fft.next_fast_len(2 * candidates[0].length_samples - 1, real=True)
    energy = np.array([np.sum(u.samples ** 2) for u in candidates])
    worst = np.full(len(candidates), -np.inf)
    chosen = [0]
    taken = np.zeros(len(candidates), dtype=bool)
    taken[0] = True
    batch = 64
    while len(chosen) < pool_size:
        last = chosen[-1]
        ref = fft.rfft(candidates[last].samples, n)
        for lo in range(0, len(candidates), batch):
            block = np.stack([u.samples for u in candidates[lo:lo + batch]])
            specs = fft.rfft(block, n, axis=-1)
            norm = np.sqrt(energy[lo:lo + batch] * energy[last])
            db = np.minimum(_peak_db(specs, ref[None, :], n, norm), 0.0)
            worst[lo:lo + batch] = np.maximum(worst[lo:lo + batch], db)
        score = np.where(taken, np.inf, worst)
        nxt = int(np.argmin(score))  # argmin returns the first (lowest index) tie
        chosen.append(nxt)
        taken[nxt] = True

    pool = [candidates[i] for i in chosen]
    matrix = crosstalk_matrix(pool)
    best, best_val = None, np.inf
    for combo in itertools.combinations(range(pool_size), active):
        if active == 1:
            val = -np.inf
        else:
            sub = matrix[np.ix_(combo, combo)]
            val = np.max(sub[~np.eye(active, dtype=bool)])
        if val < best_val:
            best, best_val = combo, val
    return CapricepSet(pool, tuple(best), matrix, len(candidates), base_seed,
                       candidates[0].config)


def make_set(num_candidates: int = 1000, pool_size: int = 10, active: int = 3,
             base_seed: int = 0, config: UnitConfig | None = None, jobs: int = 1) -> CapricepSet:
    """Generate candidates from ``base_seed`` and select a set."""
    cands = generate_candidates(num_candidates, base_seed, config, jobs)
    return select_set(cands, pool_size, active, base_seed)
