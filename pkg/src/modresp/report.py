"""Plots and tables computed from a run directory (no re-analysis)."""
from __future__ import annotations

import json
import math
import sys
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from modresp.analyzer import CalibratedResponse
from modresp.errors import MetricError
from modresp.metrics import (
    gain_smoothness,
    map_csv,
    smoothness_csv,
    summarize,
)
from modresp.svgplot import PALETTE, SCATTER_COLORS, Figure

GAIN_LIM = (-80.0, 10.0)
FREQ_LIM = (0.5, 200.0)
GRID_SHAPE = (4, 4)
SKIP_DIRS = {"calibration", "frames"}


@dataclass
class Cell:
    extractor_id: str
    f0_hz: float
    path: Path
    response: CalibratedResponse


def load_run(run_dir) -> tuple[list[Cell], list[dict]]:
    """All readable cells plus a list of unreadable response files."""
    run_dir = Path(run_dir)
    cells, problems = [], []
    for path in sorted(run_dir.glob("*/*/response.json")):
        ext = path.parent.parent.name
        if ext in SKIP_DIRS:
            continue
        try:
            resp = CalibratedResponse.from_json(path.read_text())
            f0 = float(resp.meta.get("f0_hz", int(path.parent.name) / 1000.0))
            cells.append(Cell(resp.meta.get("extractor_id", ext), f0, path.parent, resp))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            problems.append({"path": str(path), "error": f"{type(exc).__name__}: {exc}"})
    cells.sort(key=lambda c: (c.extractor_id, c.f0_hz))
    return cells, problems


def _response_panel(fig, x0, y0, w, h, cell: Cell, title: str | None = None, small=False):
    r = cell.response
    p = fig.panel(x0, y0, w, h, FREQ_LIM, GAIN_LIM, logx=True,
                  title=title if title is not None else f"{cell.extractor_id}  f0={cell.f0_hz:.1f} Hz",
                  xlabel="" if small else "modulation frequency (Hz)",
                  ylabel="" if small else "level (dB)")
    p.line(r.freq_hz, r.random_db, PALETTE["random"])
    p.line(r.freq_hz, r.nonlti_db, PALETTE["nonlti"])
    p.line(r.freq_hz, r.gain_db, PALETTE["gain"], width=1.6)
    try:
        m = summarize(r, cell.extractor_id, cell.f0_hz)
        p.vline(m.bw, PALETTE["bw"])
        p.hline(m.td_db, PALETTE["td"])
        p.text(0.03, 0.93, f"bw {m.bw:.1f} Hz  TD {m.td_db:.1f} dB  SNR {m.snr_db:.1f} dB", size=8)
    except MetricError as exc:
        p.text(0.03, 0.93, f"metrics unavailable: {exc}", size=8)
    return p


def response_svg(cell: Cell) -> str:
    fig = Figure(520, 340)
    p = _response_panel(fig, 60, 30, 440, 260, cell)
    p.text(0.70, 1.17, "gain", color=PALETTE["gain"])
    p.text(0.80, 1.17, "non-LTI", color=PALETTE["nonlti"])
    p.text(0.92, 1.17, "random", color=PALETTE["random"])
    return fig.to_svg()


def records_for(cells):
    recs, problems = [], []
    for c in cells:
        try:
            recs.append(summarize(c.response, c.extractor_id, c.f0_hz,
                                  c.response.meta.get("voiced_fraction", 1.0)))
        except MetricError as exc:
            problems.append({"path": str(c.path), "error": f"MetricError: {exc}"})
    return recs, problems


def smoothness_records(cells, records):
    by_ext = defaultdict(list)
    bw = {(r.extractor_id, r.carrier_f0): r.bw for r in records}
    for c in cells:
        if (c.extractor_id, c.f0_hz) in bw:
            by_ext[c.extractor_id].append(c)
    out, notes = [], []
    for ext, group in sorted(by_ext.items()):
        freq = group[0].response.freq_hz
        if any(len(g.response.freq_hz) != len(freq) for g in group):
            notes.append(f"{ext}: frequency axes differ; smoothness skipped")
            continue
        try:
            out.append(gain_smoothness(ext, [g.f0_hz for g in group], freq,
                                       [g.response.gain_db for g in group],
                                       [bw[(ext, g.f0_hz)] for g in group]))
        except MetricError as exc:
            notes.append(f"{ext}: {exc}")
    return out, notes


def map_svg(records, smooth) -> str:
    fig = Figure(760, 360)
    ext_ids = sorted({r.extractor_id for r in records})
    color = {e: SCATTER_COLORS[i % len(SCATTER_COLORS)] for i, e in enumerate(ext_ids)}
    summary = {}
    for e in ext_ids:
        rs = [r for r in records if r.extractor_id == e]
        summary[e] = (float(np.median([r.bw for r in rs])), float(np.median([r.snr_db for r in rs])))
    bws = [v[0] for v in summary.values()] or [1.0]
    snrs = [v[1] for v in summary.values()] or [0.0]
    xlim = (max(0.5, min(bws) / 1.5), max(bws) * 1.5)
    ylim = (math.floor(min(snrs) / 10) * 10 - 10, math.ceil(max(snrs) / 10) * 10 + 10)
    p1 = fig.panel(60, 30, 300, 270, xlim, ylim, logx=True, title="median over f0",
                   xlabel="bandwidth bw (Hz)", ylabel="SNR (dB)")
    for e in ext_ids:
        p1.point(*summary[e], color[e], e)
    sds = [(s.sd_gain_modfreq, s.sd_gain_fundfreq) for s in smooth]
    top = max([max(a, b) for a, b in sds] + [1e-3])
    lim = (0.0, top * 1.2)
    p2 = fig.panel(440, 30, 300, 270, lim, lim, title="gain smoothness",
                   xlabel="SD of gain difference, modulation freq (dB)",
                   ylabel="SD of gain difference, f0 (dB)")
    for s in smooth:
        p2.point(s.sd_gain_modfreq, s.sd_gain_fundfreq, color[s.extractor_id], s.extractor_id)
    return fig.to_svg()


def cmd_report(run_dir, log=print) -> dict:
    run_dir = Path(run_dir)
    cells, problems = load_run(run_dir)
    if not cells:
        raise FileNotFoundError(f"no response.json under {run_dir}")
    for c in cells:
        (c.path / "response.svg").write_text(response_svg(c))
    summary = cmd_map(run_dir, cells=cells, problems=problems, log=log)
    summary["plots"] = len(cells)
    return summary


def cmd_map(run_dir, cells=None, problems=None, log=print) -> dict:
    run_dir = Path(run_dir)
    if cells is None:
        cells, problems = load_run(run_dir)
        if not cells:
            raise FileNotFoundError(f"no response.json under {run_dir}")
    problems = list(problems or [])
    records, bad = records_for(cells)
    problems += bad
    smooth, notes = smoothness_records(cells, records)
    (run_dir / "map.csv").write_text(map_csv(records))
    (run_dir / "smoothness.csv").write_text(smoothness_csv(smooth))
    (run_dir / "map.svg").write_text(map_svg(records, smooth))
    for n in notes:
        log(f"note: {n}")
    for prob in problems:
        log(f"unreadable: {prob['path']}: {prob['error']}")
    (run_dir / "report_problems.json").write_text(json.dumps(problems, indent=1) + "\n")
    return {"cells": len(cells), "records": len(records), "smoothness": len(smooth),
            "problems": problems}


def cmd_frames(run_dir, shape=GRID_SHAPE, log=print) -> list[Path]:
    """One SVG per carrier with a fixed panel grid and fixed axes."""
    run_dir = Path(run_dir)
    cells, problems = load_run(run_dir)
    if not cells:
        raise FileNotFoundError(f"no response.json under {run_dir}")
    by_ext = defaultdict(dict)
    for c in cells:
        by_ext[c.extractor_id][round(c.f0_hz * 1000)] = c
    ext_ids = sorted(by_ext)
    grids = [set(v) for v in by_ext.values()]
    common = sorted(set.intersection(*grids))
    if any(g != set(common) for g in grids):
        print(f"warning: extractors cover different f0 sets; using the {len(common)} shared "
              "carriers", file=sys.stderr)
    rows, cols = shape
    if len(ext_ids) > rows * cols:
        print(f"warning: {len(ext_ids)} extractors exceed the {rows}x{cols} grid; "
              "extra panels dropped", file=sys.stderr)
    out_dir = run_dir / "frames"
    out_dir.mkdir(exist_ok=True)
    for old in out_dir.glob("frame_*.svg"):
        old.unlink()
    pw, ph, mx, my = 230, 150, 40, 34
    paths = []
    for i, key in enumerate(common, start=1):
        fig = Figure(cols * (pw + mx) + 20, rows * (ph + my) + 40)
        for j in range(rows * cols):
            r, c = divmod(j, cols)
            x0, y0 = 40 + c * (pw + mx), 40 + r * (ph + my)
            if j < len(ext_ids):
                cell = by_ext[ext_ids[j]][key]
                _response_panel(fig, x0, y0, pw, ph, cell, title=ext_ids[j], small=True)
            else:
                fig.panel(x0, y0, pw, ph, FREQ_LIM, GAIN_LIM, logx=True)
        fig.text(20, 22, f"f0 = {key / 1000:.2f} Hz", size=13)
        path = out_dir / f"frame_{i:04d}.svg"
        path.write_text(fig.to_svg())
        paths.append(path)
    for prob in problems:
        log(f"unreadable: {prob['path']}: {prob['error']}")
    return paths
