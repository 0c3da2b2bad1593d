"""Summary metrics of a calibrated response.

bw
    first modulation frequency above 4 Hz where the gain drops 3 dB below the
    plateau (median gain over 1-4 Hz); the band edge if it never does.
td
    mean random plus non-LTI power over ``0 < f <= bw`` (DC excluded: the
    mean cents offset carries no modulation).
snr
    mean LTI power (``gain**2``) over the same bins, in dB, minus td.
smoothness
    SD of first differences of the gain along modulation frequency and along
    carrier f0.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np

from modresp.analyzer import DB_FLOOR, CalibratedResponse, to_db
from modresp.errors import MetricError

PLATEAU_BAND_HZ = (1.0, 4.0)
DROP_DB = 3.0
PROBE_HZ = (2.0, 4.0, 8.0, 16.0, 32.0)


@dataclass
class Bandwidth:
    bw_hz: float
    plateau_db: float
    band_edge_limited: bool


@dataclass
class MetricsRecord:
    extractor_id: str
    carrier_f0: float
    bw: float
    td_db: float
    snr_db: float
    plateau_gain_db: float
    lti_power_db: float
    voiced_fraction: float = 1.0
    band_edge_limited: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SmoothnessRecord:
    extractor_id: str
    sd_gain_modfreq: float
    sd_gain_fundfreq: float


def bandwidth(freq_hz, gain_db, masked_above_hz: float | None = None) -> Bandwidth:
    """Plateau-relative -3 dB bandwidth (first crossing, bin resolution)."""
    f = np.asarray(freq_hz, dtype=float)
    g = np.asarray(gain_db, dtype=float)
    lo, hi = PLATEAU_BAND_HZ
    plateau_bins = (f >= lo) & (f <= hi)
    if plateau_bins.sum() < 4:
        raise MetricError(f"only {plateau_bins.sum()} unmasked bins in {lo}-{hi} Hz; need 4")
    plateau = float(np.median(g[plateau_bins]))
    above = np.flatnonzero((f > hi) & (g < plateau - DROP_DB))
    if above.size:
        return Bandwidth(float(f[above[0]]), plateau, False)
    edge = float(masked_above_hz) if masked_above_hz is not None else float(f[-1])
    return Bandwidth(edge, plateau, True)


def total_distortion_and_snr(freq_hz, gain_db, random_db, nonlti_db, bw: float):
    """Return ``(td_db, snr_db, lti_power_db)`` over ``0 < f <= bw``."""
    f = np.asarray(freq_hz, dtype=float)
    band = (f > 0) & (f <= bw + 1e-9)
    if not band.any():
        raise MetricError(f"no bins in (0, {bw}] Hz")
    dist = 10.0 ** (np.asarray(random_db)[band] / 10.0) + 10.0 ** (np.asarray(nonlti_db)[band] / 10.0)
    td = float(to_db(np.mean(dist)))
    lti = float(to_db(np.mean(10.0 ** (np.asarray(gain_db)[band] / 10.0))))
    return td, lti - td, lti


def summarize(resp: CalibratedResponse, extractor_id: str = "", carrier_f0: float = math.nan,
              voiced_fraction: float = 1.0) -> MetricsRecord:
    b = bandwidth(resp.freq_hz, resp.gain_db, resp.masked_above_hz)
    td, snr, lti = total_distortion_and_snr(resp.freq_hz, resp.gain_db, resp.random_db,
                                            resp.nonlti_db, b.bw_hz)
    return MetricsRecord(extractor_id, float(carrier_f0), b.bw_hz, td, snr, b.plateau_db, lti,
                         float(voiced_fraction), b.band_edge_limited)


def _first_difference_sd(diffs: list[np.ndarray]) -> float:
    pooled = np.concatenate([np.ravel(d) for d in diffs]) if diffs else np.empty(0)
    if pooled.size == 0:
        raise MetricError("no gain differences to pool")
    return float(np.std(pooled))


def gain_smoothness(extractor_id: str, f0s, freq_hz, gains, bws) -> SmoothnessRecord:
    """Gain-difference SDs over a carrier grid.

    ``gains[i]`` is the gain curve (dB on ``freq_hz``) at carrier ``f0s[i]``
    and ``bws[i]`` its bandwidth. Along modulation frequency, differences of
    adjacent bins with ``0 < f <= bw`` are pooled over the grid. Along f0,
    the gain is interpolated at the probe frequencies not above the smallest
    bw, and differences of adjacent carriers are pooled.
    """
    f0s = np.asarray(f0s, dtype=float)
    f = np.asarray(freq_hz, dtype=float)
    g = np.asarray(gains, dtype=float)
    if len(f0s) < 2 or g.ndim != 2 or g.shape[0] != len(f0s) or g.shape[1] != len(f):
        raise MetricError("need a gain surface over at least 2 carriers")
    bws = np.asarray(bws, dtype=float)
    mod = []
    for row, bw in zip(g, bws):
        band = (f > 0) & (f <= bw + 1e-9)
        if band.sum() >= 2:
            mod.append(np.diff(row[band]))
    probes = [p for p in PROBE_HZ if p <= bws.min() + 1e-9]
    if not probes:
        raise MetricError(f"smallest bandwidth {bws.min():.3g} Hz lies below every probe")
    order = np.argsort(f0s)
    surface = np.array([np.interp(probes, f, row) for row in g[order]])
    return SmoothnessRecord(extractor_id, _first_difference_sd(mod),
                            _first_difference_sd([np.diff(surface, axis=0)]))


MAP_COLUMNS = ("extractor_id", "f0_hz", "bw_hz", "td_db", "snr_db")
SMOOTHNESS_COLUMNS = ("extractor_id", "sd_modfreq_db", "sd_fundfreq_db")


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return f"{float(v):.6f}"


def map_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MAP_COLUMNS)
    for r in sorted(records, key=lambda r: (r.extractor_id, r.carrier_f0)):
        w.writerow([r.extractor_id] + [_fmt(v) for v in (r.carrier_f0, r.bw, r.td_db, r.snr_db)])
    return buf.getvalue()


def smoothness_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SMOOTHNESS_COLUMNS)
    for r in sorted(records, key=lambda r: r.extractor_id):
        w.writerow([r.extractor_id, _fmt(r.sd_gain_modfreq), _fmt(r.sd_gain_fundfreq)])
    return buf.getvalue()


__all__ = [
    "DB_FLOOR", "Bandwidth", "MetricsRecord", "SmoothnessRecord", "bandwidth",
    "total_distortion_and_snr", "summarize", "gain_smoothness", "map_csv", "smoothness_csv",
]
