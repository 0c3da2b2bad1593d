"""Measurement runs: test-system construction, grid cells and persistence.

A run directory looks like::

    <run>/manifest.json
    <run>/capricep_set.json
    <run>/calibration/response.json, calibration.json
    <run>/<extractor>/<f0 in mHz>/response.json, response.csv [, audio.wav]
    <run>/failures.json

The test system (unit set, excitation, modulation track and calibration) does
not depend on the carrier, so it is built once per run and shared by every
cell.
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import tempfile
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from modresp import __version__
from modresp.analyzer import (
    AnalysisConfig,
    AnalysisContext,
    Calibration,
    calibrate,
    calibrate_and_normalize,
    measure_track,
)
from modresp.capricep import CapricepSet, UnitConfig, make_set
from modresp.errors import ModrespError
from modresp.extractors import (
    ExtractorSpec,
    run_builtin,
    run_external,
    track_to_cents,
    unvoiced_spans,
)
from modresp.metrics import summarize
from modresp.sequence import SequenceLayout, build_excitation
from modresp.synth import (
    GaussianSmoother,
    VfoConfig,
    f0_grid,
    fm_harmonic_tone,
    smooth_excitation,
    write_wav_24bit,
)

LOW_VOICED_FRACTION = 0.95


@dataclass
class RunConfig:
    seed: int = 0
    num_candidates: int = 1000
    pool_size: int = 10
    num_sections: int = 440
    f0_min: float = 80.0
    f0_max: float = 800.0
    steps_per_octave: int = 48
    unit_interval: int = 24576
    num_allocations: int = 36
    depth_cents: float = 25.0
    sigma_ms: float = 5.0
    decimation: int = 8
    window: str = "rect"
    threshold_db: float = -150.0
    sample_rate: float = 44100.0
    jobs: int = 1
    keep_audio: bool = False

    def unit_config(self) -> UnitConfig:
        return UnitConfig(num_sections=self.num_sections, sample_rate=self.sample_rate)

    def layout(self) -> SequenceLayout:
        return SequenceLayout(self.unit_interval, self.num_allocations)

    def smoother(self) -> GaussianSmoother:
        return GaussianSmoother(self.sigma_ms / 1000.0, self.sample_rate)

    def analysis_config(self) -> AnalysisConfig:
        return AnalysisConfig(self.sample_rate, self.unit_interval, self.decimation,
                              self.threshold_db, self.window)

    def grid(self) -> np.ndarray:
        return f0_grid(self.f0_min, self.f0_max, self.steps_per_octave)

    def set_key(self) -> str:
        doc = {"seed": self.seed, "n": self.num_candidates, "pool": self.pool_size,
               "unit": asdict(self.unit_config()), "v": __version__}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class TestSystem:
    config: RunConfig
    cset: CapricepSet
    layout: SequenceLayout
    reference: np.ndarray
    context: AnalysisContext
    calibration: Calibration

    __test__ = False

    @property
    def duration_s(self) -> float:
        return len(self.reference) / self.config.sample_rate


def load_or_make_set(config: RunConfig, set_path=None, cache_dir=None) -> CapricepSet:
    """Unit set from ``set_path``, the cache, or fresh generation."""
    if set_path:
        return CapricepSet.from_json(Path(set_path).read_text())
    cached = Path(cache_dir) / f"capricep_{config.set_key()}.json" if cache_dir else None
    if cached is not None and cached.exists():
        return CapricepSet.from_json(cached.read_text())
    cset = make_set(config.num_candidates, config.pool_size, 3, config.seed,
                    config.unit_config(), config.jobs)
    if cached is not None:
        cached.parent.mkdir(parents=True, exist_ok=True)
        tmp = cached.with_suffix(".tmp")
        tmp.write_text(cset.to_json())
        os.replace(tmp, cached)
    return cset


def build_test_system(config: RunConfig, cset: CapricepSet | None = None,
                      set_path=None, cache_dir=None) -> TestSystem:
    cset = cset or load_or_make_set(config, set_path, cache_dir)
    layout = config.layout()
    ex = build_excitation(cset, layout)
    reference = smooth_excitation(ex, config.smoother(), config.depth_cents)
    context = AnalysisContext.build(cset, layout, config.analysis_config())
    return TestSystem(config, cset, layout, reference, context, calibrate(reference, context))


def f0_dirname(f0: float) -> str:
    return f"{int(round(f0 * 1000)):07d}"


@dataclass
class CellResult:
    extractor_id: str
    f0_hz: float
    path: str | None = None
    error: dict | None = None
    metrics: dict = field(default_factory=dict)


def _cell_meta(spec: ExtractorSpec, f0: float, track, vfo: VfoConfig) -> dict:
    meta = {
        "extractor_id": spec.id,
        "f0_hz": float(f0),
        "num_harmonics": int(vfo.harmonics),
        "voiced_fraction": float(track.voiced_fraction),
        "unvoiced_spans": len(unvoiced_spans(track)),
        "num_frames": int(len(track.times)),
    }
    if track.voiced_fraction < LOW_VOICED_FRACTION:
        meta["flags"] = ["low_voiced_fraction"]
    return meta


def run_cell_group(system: TestSystem, f0: float, specs, run_dir) -> list[CellResult]:
    """Synthesize one carrier's tone and measure every extractor on it."""
    cfg = system.config
    run_dir = Path(run_dir)
    vfo = VfoConfig(float(f0), None, cfg.depth_cents, cfg.sample_rate)
    audio = None
    results = []
    for spec in specs:
        cell = run_dir / spec.id / f0_dirname(f0)
        try:
            cell.mkdir(parents=True, exist_ok=True)
            if spec.kind == "identity":
                track = run_builtin(spec, np.zeros(1), cfg.sample_rate, system.reference, f0)
            else:
                if audio is None:
                    audio = fm_harmonic_tone(system.reference, vfo)
                if spec.kind == "external":
                    track = _external_track(spec, audio, cell, cfg)
                else:
                    track = run_builtin(spec, audio, cfg.sample_rate)
                if cfg.keep_audio and spec.kind != "external":
                    write_wav_24bit(audio, cell / "audio.wav", cfg.sample_rate)
            y = track_to_cents(track, f0, system.context.config.analysis_rate, system.duration_s)
            resp = measure_track(y, system.calibration, system.context)
            resp.meta = _cell_meta(spec, f0, track, vfo)
            rec = summarize(resp, spec.id, f0, track.voiced_fraction)
            (cell / "response.json").write_text(resp.to_json())
            (cell / "response.csv").write_text(resp.to_csv())
            results.append(CellResult(spec.id, float(f0), str(cell), None, rec.to_dict()))
        except (ModrespError, OSError, ValueError, FloatingPointError) as exc:
            err = {"type": type(exc).__name__, "message": str(exc)}
            for attr in ("returncode", "stderr", "line"):
                if getattr(exc, attr, None) is not None:
                    err[attr] = getattr(exc, attr)
            results.append(CellResult(spec.id, float(f0), None, err))
    return results


def _external_track(spec, audio, cell: Path, cfg: RunConfig):
    if cfg.keep_audio:
        wav = cell / "audio.wav"
        write_wav_24bit(audio, wav, cfg.sample_rate)
        return run_external(spec, wav, cell)
    with tempfile.TemporaryDirectory(prefix="modresp-") as tmp:
        wav = Path(tmp) / "audio.wav"
        write_wav_24bit(audio, wav, cfg.sample_rate)
        return run_external(spec, wav, tmp)


_WORKER: dict = {}


def _init_worker(system, specs, run_dir):
    _WORKER.update(system=system, specs=specs, run_dir=run_dir)


def _worker_group(f0):
    try:
        return run_cell_group(_WORKER["system"], f0, _WORKER["specs"], _WORKER["run_dir"])
    except Exception as exc:  # never let one carrier take the pool down
        return [CellResult(s.id, float(f0), None,
                           {"type": type(exc).__name__, "message": str(exc),
                            "traceback": traceback.format_exc()})
                for s in _WORKER["specs"]]


def write_calibration(system: TestSystem, run_dir: Path) -> None:
    cal_dir = run_dir / "calibration"
    cal_dir.mkdir(parents=True, exist_ok=True)
    cal = system.calibration
    resp = calibrate_and_normalize(cal.decomposition, cal, cal.selection.sd_curve)
    (cal_dir / "response.json").write_text(resp.to_json())
    lti = np.abs(cal.decomposition.lti_spectrum) ** 2
    doc = {
        "selection": cal.selection.to_dict(),
        "masked_above_hz": cal.masked_above_hz,
        "lti_power_db": [float(v) for v in 10 * np.log10(np.maximum(lti, 1e-300))],
        "n_pairs": cal.decomposition.n_pairs,
        "n_short_responses": cal.decomposition.n_short_responses,
    }
    (cal_dir / "calibration.json").write_text(json.dumps(doc, indent=1) + "\n")


def manifest(system: TestSystem, specs, grid) -> dict:
    cfg = system.config
    return {
        "tool": "modresp",
        "version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "run_config": asdict(cfg),
        "seeds": {"base_seed": cfg.seed,
                  "unit_seeds": [int(u.seed) for u in system.cset.units]},
        "capricep_set": {
            "active": list(system.cset.active),
            "max_crosstalk_db": system.cset.max_crosstalk_db,
            "degenerate": system.cset.degenerate,
            "candidate_pool_size": system.cset.candidate_pool_size,
        },
        "layout": system.layout.to_dict(),
        "smoother": {"sigma_s": system.config.sigma_ms / 1000.0,
                     "half_length_s": system.config.smoother().half_length_s},
        "analysis": system.context.config.to_dict(),
        "vfo": [{"carrier_f0": float(f), "num_harmonics": VfoConfig(float(f), None,
                 cfg.depth_cents, cfg.sample_rate).harmonics,
                 "depth_cents": cfg.depth_cents} for f in grid],
        "extractors": [{"id": s.id, "kind": s.kind, "params": s.params, "command": s.command}
                       for s in specs],
    }


def measure(config: RunConfig, specs, run_dir, set_path=None, cache_dir=None,
            log=None) -> tuple[Path, list[CellResult]]:
    """Run every (extractor, carrier) cell of the grid into ``run_dir``."""
    log = log or (lambda msg: None)
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    ids = [s.id for s in specs]
    if len(set(ids)) != len(ids):
        raise ModrespError(f"extractor ids must be unique: {ids}")
    grid = config.grid()
    log(f"building test system (seed {config.seed}, {config.num_candidates} candidates)")
    system = build_test_system(config, set_path=set_path, cache_dir=cache_dir)
    (run_dir / "capricep_set.json").write_text(system.cset.to_json() + "\n")
    (run_dir / "manifest.json").write_text(json.dumps(manifest(system, specs, grid), indent=1) + "\n")
    write_calibration(system, run_dir)
    log(f"calibration pairs {system.calibration.selection.pairs}, "
        f"band edge {system.calibration.masked_above_hz:.1f} Hz")

    results: list[CellResult] = []
    if config.jobs > 1 and len(grid) > 1:
        with ProcessPoolExecutor(config.jobs, initializer=_init_worker,
                                 initargs=(system, specs, run_dir)) as pool:
            for group in pool.map(_worker_group, grid):
                results.extend(group)
                log(f"f0 {group[0].f0_hz:.2f} Hz done")
    else:
        _init_worker(system, specs, run_dir)
        for f0 in grid:
            results.extend(_worker_group(f0))
            log(f"f0 {f0:.2f} Hz done")
    failures = [{"extractor_id": r.extractor_id, "f0_hz": r.f0_hz, **r.error}
                for r in results if r.error]
    (run_dir / "failures.json").write_text(json.dumps(failures, indent=1) + "\n")
    return run_dir, results
