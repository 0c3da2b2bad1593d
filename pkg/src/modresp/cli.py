"""Command line: ``modresp measure|report|frames|map``.

Exit codes: 0 success, 2 partial (some cells failed), 64 usage error,
70 internal error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import sys
import traceback
from pathlib import Path

from modresp.errors import ConfigurationError, ModrespError

EXIT_OK = 0
EXIT_PARTIAL = 2
EXIT_USAGE = 64
EXIT_INTERNAL = 70


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="modresp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("measure", help="synthesize, extract and analyse a carrier grid")
    m.add_argument("--extractor", "-e", action="append", required=True,
                   help="builtin:<ncf|yin|cep|identity>[:k=v,...] or external:'<cmd {input} {output}>'"
                        " (repeatable)")
    m.add_argument("--out", default="runs", help="parent directory for runs (default: runs)")
    m.add_argument("--run-name", help="run directory name (default: UTC timestamp)")
    m.add_argument("--f0-min", type=float, default=80.0)
    m.add_argument("--f0-max", type=float, default=800.0)
    m.add_argument("--steps-per-octave", type=_positive_int, default=48)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--candidates", type=_positive_int, default=1000,
                   help="unit pulses generated before selection")
    m.add_argument("--pool-size", type=_positive_int, default=10)
    m.add_argument("--sections", type=int, default=440, help="all-pass sections per unit")
    m.add_argument("--nu", type=_positive_int, default=24576, help="unit interval in samples")
    m.add_argument("--depth-cents", type=float, default=25.0, help="RMS modulation depth")
    m.add_argument("--sigma-ms", type=float, default=5.0, help="Gaussian smoother sigma")
    m.add_argument("--decimation", type=_positive_int, default=8)
    m.add_argument("--window", choices=("rect", "cos"), default="rect")
    m.add_argument("--threshold-db", type=float, default=-150.0)
    m.add_argument("--jobs", type=_positive_int, default=1)
    m.add_argument("--keep-audio", action="store_true")
    m.add_argument("--capricep-set", help="reuse a capricep_set.json instead of generating")
    m.add_argument("--cache-dir", help="cache generated unit sets here")
    m.add_argument("--quiet", "-q", action="store_true")

    for name, text in (("report", "per-cell plots, map.csv, smoothness.csv, map.svg"),
                       ("map", "map.csv, smoothness.csv and map.svg only"),
                       ("frames", "one SVG frame per carrier")):
        s = sub.add_parser(name, help=text)
        s.add_argument("run_dir")
        if name == "frames":
            s.add_argument("--grid", default="4x4", help="panel grid ROWSxCOLS (default 4x4)")
    return p


def _cmd_measure(args) -> int:
    from modresp.extractors import parse_extractor
    from modresp.pipeline import RunConfig, measure

    specs = [parse_extractor(e) for e in args.extractor]
    cfg = RunConfig(seed=args.seed, num_candidates=args.candidates, pool_size=args.pool_size,
                    num_sections=args.sections, f0_min=args.f0_min, f0_max=args.f0_max,
                    steps_per_octave=args.steps_per_octave, unit_interval=args.nu,
                    depth_cents=args.depth_cents, sigma_ms=args.sigma_ms,
                    decimation=args.decimation, window=args.window,
                    threshold_db=args.threshold_db, jobs=args.jobs, keep_audio=args.keep_audio)
    cfg.analysis_config()  # validate before any work
    cfg.grid()
    name = args.run_name or _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        run_dir = out / name
        run_dir.mkdir(exist_ok=True)
    except OSError as exc:
        print(f"modresp: cannot create run directory: {exc}", file=sys.stderr)
        return EXIT_USAGE
    log = (lambda msg: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    run_dir, results = measure(cfg, specs, run_dir, set_path=args.capricep_set,
                               cache_dir=args.cache_dir, log=log)
    failed = [r for r in results if r.error]
    print(run_dir)
    if failed:
        print(f"modresp: {len(failed)} of {len(results)} cells failed; see "
              f"{run_dir / 'failures.json'}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_report(args) -> int:
    from modresp.report import cmd_map, cmd_report

    log = lambda msg: print(msg, file=sys.stderr)  # noqa: E731
    fn = cmd_report if args.command == "report" else cmd_map
    summary = fn(args.run_dir, log=log)
    return EXIT_PARTIAL if summary["problems"] else EXIT_OK


def _cmd_frames(args) -> int:
    from modresp.report import cmd_frames

    try:
        rows, cols = (int(v) for v in args.grid.lower().split("x"))
    except ValueError:
        raise ConfigurationError(f"bad --grid {args.grid!r}; expected ROWSxCOLS") from None
    paths = cmd_frames(args.run_dir, (rows, cols), log=lambda m: print(m, file=sys.stderr))
    print(f"{len(paths)} frames in {Path(args.run_dir) / 'frames'}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code not in (None, 0) else EXIT_OK
    handlers = {"measure": _cmd_measure, "report": _cmd_report, "map": _cmd_report,
                "frames": _cmd_frames}
    try:
        return handlers[args.command](args)
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"modresp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModrespError as exc:
        print(f"modresp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
