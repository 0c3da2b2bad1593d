"""Periodic excitation: unit pulse trains mixed by orthogonal polarity rows.

Each of the three units is placed every ``unit_interval`` samples; allocation
``a`` of unit ``k`` carries the sign ``polarity[k][a % 4]``. The mixture is
periodic with period ``4 * unit_interval``.

The rows are Walsh functions of length 4. Their circular spectra are
disjoint: row 0 (all ones) lives on DFT bins ``m % 4 == 0``, row 1 on
``m % 4 == 2`` and row 2 on the odd bins. One period therefore carries every
bin exactly once, and the three unit responses fill 1/4, 1/4 and 1/2 of the
bins, which is where the extended-response weights come from.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from modresp.errors import ArgumentError, ConfigurationError

SLOTS = 4
UNIT_WEIGHTS = (0.25, 0.25, 0.5)


def polarity_rows() -> np.ndarray:
    """The 3x4 matrix of +/-1 polarity rows (mutually orthogonal)."""
    return np.array([[1, 1, 1, 1],
                     [1, -1, 1, -1],
                     [1, 1, -1, -1]], dtype=np.int64)


def row_spectrum(row, period_bins: int) -> np.ndarray:
    """DFT over one period of a unit-spaced pulse train signed by ``row``.

    ``period_bins`` is the number of rfft bins (``2 * n + 1`` for a period of
    ``4 * n`` samples). Entry ``m`` equals ``sum_s row[s] * exp(-2j*pi*m*s/4)``.
    """
    m = np.arange(period_bins)
    phase = np.exp(-0.5j * np.pi * np.outer(m % SLOTS, np.arange(SLOTS)))
    return phase @ np.asarray(row, dtype=float)


@dataclass(frozen=True)
class SequenceLayout:
    unit_interval: int = 24576
    num_allocations: int = 36
    polarity: np.ndarray = field(default_factory=polarity_rows)
    slots_per_period: int = SLOTS

    def __post_init__(self):
        pol = np.asarray(self.polarity)
        if self.slots_per_period != SLOTS:
            raise ConfigurationError("only 4 slots per period are supported")
        if pol.shape != (3, SLOTS) or not np.all(np.abs(pol) == 1):
            raise ConfigurationError("polarity must be a 3x4 matrix of +/-1")
        gram = pol @ pol.T
        if np.any(gram[~np.eye(3, dtype=bool)] != 0):
            raise ConfigurationError("polarity rows must be mutually orthogonal")
        if self.unit_interval < 1:
            raise ConfigurationError("unit_interval must be positive")
        if self.num_allocations % SLOTS:
            raise ConfigurationError("num_allocations must be a multiple of 4")
        if self.num_allocations < 3 * SLOTS:
            raise ConfigurationError("need at least 3 periods of allocations")

    @property
    def period(self) -> int:
        return SLOTS * self.unit_interval

    @property
    def num_periods(self) -> int:
        return self.num_allocations // SLOTS

    def to_dict(self) -> dict:
        return {
            "unit_interval": int(self.unit_interval),
            "num_allocations": int(self.num_allocations),
            "slots_per_period": SLOTS,
            "polarity": np.asarray(self.polarity).tolist(),
        }

    @classmethod
    def from_dict(cls, doc) -> "SequenceLayout":
        return cls(doc["unit_interval"], doc["num_allocations"],
                   np.array(doc["polarity"], dtype=np.int64))


@dataclass
class ModulationExcitation:
    samples: np.ndarray
    layout: SequenceLayout
    sample_rate: float
    # [start, end) sample indices; the first and last periods are excluded
    steady_region: tuple[int, int]


def build_excitation(units, layout: SequenceLayout | None = None) -> ModulationExcitation:
    """Overlap-add the signed unit pulse trains.

    ``units`` is a ``CapricepSet`` or a sequence of three ``UnitCapricep``.
    The result has ``num_allocations * unit_interval + unit_length - 1``
    samples.
    """
    layout = layout or SequenceLayout()
    units = list(getattr(units, "units", units))
    if len(units) != 3:
        raise ArgumentError(f"need 3 units, got {len(units)}")
    rates = {float(u.sample_rate) for u in units}
    if len(rates) != 1:
        raise ArgumentError(f"inconsistent sample rates: {sorted(rates)}")
    length = max(u.length_samples for u in units)
    if length > layout.period:
        raise ArgumentError(f"unit length {length} exceeds the period {layout.period}")
    nu = layout.unit_interval
    out = np.zeros(layout.num_allocations * nu + length - 1)
    pol = np.asarray(layout.polarity)
    for k, u in enumerate(units):
        s = u.samples
        for a in range(layout.num_allocations):
            out[a * nu:a * nu + len(s)] += pol[k, a % SLOTS] * s
    steady = (layout.period, (layout.num_periods - 1) * layout.period)
    return ModulationExcitation(out, layout, rates.pop(), steady)
