"""Command-line entry point: ``flopforge <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .backends import backend_ids, get_backend
from .demosaic import demosaic_bilinear
from .errors import FlopforgeError, FormatError
from .imageio import read_pgm, read_ppm, write_ppm
from .lensproject import EquidistantLens, RectilinearCamera, reproject
from .pipeline import MAX_FRAME_RATE, FrameSource, Preprocessor, make_detector, run_pipeline
from .powermeter import LOG_HEADER, BatterySpec, parse_power_log, power_report, read_power_log
from .report import RunManifest, atomic_write_text, write_json
from .rotbench import (
    CPU_REGIME,
    CSV_HEADER,
    GPU_REGIME,
    RotationKernelSpec,
    SweepAborted,
    SweepConfig,
    read_csv,
    run_sweep,
    write_csv,
)

log = logging.getLogger("flopforge")

TIMING_NOTE = (
    "elapsed_s is wall-clock time around the full kernel dispatch on a monotonic clock, "
    "after one untimed warm-up run; FLOPS = 6*D*N*W / elapsed_s (readout term excluded)"
)


def _worker_range(text):
    try:
        start, end, step = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected START:END:STEP") from None
    return start, end, step


def _size(text):
    try:
        w, h = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected WIDTHxHEIGHT") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return w, h


def _add_lens_args(p):
    p.add_argument("--lens-fov", type=float, default=195.0, help="fisheye field of view, degrees")
    p.add_argument("--cam-fov", type=float, default=150.0,
                   help="rectilinear (diagonal) field of view, degrees")
    p.add_argument("--r-pp", type=float, default=None,
                   help="fisheye radians per pixel (default: lens fov / image width)")


# -- bench ----------------------------------------------------------------------

def cmd_bench(args) -> int:
    start, end, step = args.workers or (GPU_REGIME if args.regime == "gpu" else CPU_REGIME)
    kernel = RotationKernelSpec(args.dim, args.iterations)
    config = SweepConfig(start, end, step, kernel, args.backend)
    backend = get_backend(args.backend)
    manifest = RunManifest("bench", {
        "sweep": config.to_dict(), "regime": None if args.workers else (args.regime or "cpu"),
        "repeat": args.repeat, "backend": backend.describe(),
    })
    log.info("sweeping %d points on %s", len(config), backend.id)
    status = 0
    try:
        records = run_sweep(config, backend, repeats=args.repeat, verify=not args.no_verify)
        failure = None
    except SweepAborted as exc:
        records, failure, status = exc.records, str(exc), 1
        log.error("%s", exc)

    buf = io.StringIO()
    write_csv(records, buf)
    atomic_write_text(args.csv, buf.getvalue())
    if args.json:
        write_json(args.json, {
            "manifest": manifest.finish().to_dict(),
            "timing": TIMING_NOTE,
            "complete": failure is None,
            "failure": failure,
            "records": [
                {"workers": r.workers, "elapsed_s": r.elapsed_s, "flops": r.flops,
                 "checksum": r.checksum, "warnings": r.warnings}
                for r in records
            ],
        })
    return status


# -- image commands -------------------------------------------------------------------

def cmd_demosaic(args) -> int:
    raw = read_pgm(args.input)
    write_ppm(args.output, demosaic_bilinear(raw))
    return 0


def _models(args, src_w, src_h, out_size):
    lens = EquidistantLens(src_w, src_h, math.radians(args.lens_fov), args.r_pp)
    w, h = out_size or (src_w, src_h)
    cam = RectilinearCamera(w, h, math.radians(args.cam_fov))
    return lens, cam


def cmd_reproject(args) -> int:
    src = read_ppm(args.input)
    lens, cam = _models(args, src.shape[1], src.shape[0], args.out_size)
    write_ppm(args.output, reproject(src, lens, cam))
    return 0


def cmd_pipeline(args) -> int:
    source = FrameSource.from_directory(args.frames, args.rate)
    h, w = source.shape
    lens, cam = _models(args, w, h, args.out_size)
    detector = make_detector(args.detector)
    manifest = RunManifest("pipeline", {
        "frames": str(args.frames), "detector": args.detector, "mode": args.mode,
        "pipelined": args.pipelined, "pace": args.pace, "lens_fov_deg": args.lens_fov,
        "cam_fov_deg": args.cam_fov, "r_pp": lens.r_pp, "out_size": [cam.width, cam.height],
    })
    try:
        report = run_pipeline(source, lens, cam, detector, mode=args.mode,
                              pipelined=args.pipelined, pace=args.pace,
                              preprocessor=Preprocessor(lens, cam, args.mode))
    finally:
        detector.close()
    payload = report.to_dict()
    payload["manifest"] = manifest.finish().to_dict()
    write_json(args.report, payload)
    for name in report.stage_names():
        stats = report.stats(name)
        if stats:
            log.info("%-10s mean %.6f s  sd %.6f s", name, *stats)
    return 0 if report.ok else 1


# -- power -----------------------------------------------------------------------------

def cmd_power_report(args) -> int:
    samples = parse_power_log(args.log)
    battery = BatterySpec.parse(args.battery) if args.battery else None
    rep = power_report(samples, battery, args.supply_voltage, args.flops, args.efficiency_power)
    manifest = RunManifest("power-report", {
        "log": str(args.log), "supply_voltage_v": args.supply_voltage, "battery": args.battery,
        "flops": args.flops, "efficiency_power_w": args.efficiency_power,
    })
    rep["manifest"] = manifest.finish().to_dict()
    write_json(args.report, rep)
    return 0


# -- plotdata ---------------------------------------------------------------------------

def _load_series(path: Path):
    """Returns (kind, rows) with kind 'flops' or 'current'."""
    text = path.read_text()
    if path.suffix == ".json":
        try:
            doc = json.loads(text)
            rows = [(r["workers"], r["flops"]) for r in doc["records"]]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"{path}: not a sweep JSON report ({exc})") from None
        return "flops", rows
    first = next(csv.reader(io.StringIO(text)), [])
    if tuple(f.strip() for f in first) == CSV_HEADER:
        return "flops", [(r.workers, r.flops) for r in read_csv(io.StringIO(text))]
    if tuple(f.strip() for f in first) == LOG_HEADER or len(first) == 3:
        return "current", [(s.timestamp_s, s.current_a) for s in read_power_log(io.StringIO(text), str(path))]
    raise FormatError(f"{path}: not a sweep CSV/JSON or power log")


def cmd_plotdata(args) -> int:
    loaded = [(Path(p),) + _load_series(Path(p)) for p in args.inputs]
    kinds = {kind for _, kind, _ in loaded}
    if len(kinds) > 1:
        raise FormatError("cannot mix sweep reports and power logs in one plotdata run")
    kind = kinds.pop()
    columns = "workers flops" if kind == "flops" else "time_s current_a"
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    used = set()
    for path, _, rows in loaded:
        name = path.stem
        n = 1
        while name in used:
            n += 1
            name = f"{path.stem}-{n}"
        used.add(name)
        lines = [f"# {columns}  source={path.name}"]
        lines += [f"{x!r} {y!r}" for x, y in sorted(rows)]
        atomic_write_text(out_dir / f"{name}.dat", "\n".join(lines) + "\n")
        print(out_dir / f"{name}.dat")
    return 0


# -- parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flopforge", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="rotation-kernel FLOPS sweep")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--regime", choices=("cpu", "gpu"),
                       help="cpu (default): W=1..4096 step 32; gpu: W=256..1024000 step 256")
    group.add_argument("--workers", type=_worker_range, metavar="START:END:STEP")
    p.add_argument("--dim", type=int, choices=(1, 2, 4), default=4, help="points per worker")
    p.add_argument("--iterations", type=int, default=40_000)
    p.add_argument("--backend", default="parallel",
                   help=f"execution backend ({'|'.join(backend_ids())}|<plugin-id>)")
    p.add_argument("--repeat", type=int, default=1, help="timed runs per point; the median is kept")
    p.add_argument("--no-verify", action="store_true", help="skip the closed-form result check")
    p.add_argument("--csv", default="-", help="sweep CSV output (default stdout)")
    p.add_argument("--json", help="optional JSON report with the sweep configuration")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("demosaic", help="BGGR PGM -> RGB PPM")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_demosaic)

    p = sub.add_parser("reproject", help="equidistant PPM -> rectilinear PPM")
    _add_lens_args(p)
    p.add_argument("--out-size", type=_size, default=None, metavar="WxH")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_reproject)

    p = sub.add_parser("pipeline", help="timed demosaic+reproject+detect over a frame directory")
    p.add_argument("--frames", required=True, help="directory of .pgm BGGR frames")
    _add_lens_args(p)
    p.add_argument("--out-size", type=_size, default=None, metavar="WxH")
    p.add_argument("--detector", default="stub", help="stub | stub:<ms>[,<ms>...] | exec:<cmd>")
    p.add_argument("--mode", choices=("fused", "sequential"), default="fused")
    p.add_argument("--pipelined", action="store_true",
                   help="preprocess frame i+1 while detecting on frame i")
    p.add_argument("--pace", action="store_true", help="release frames at --rate")
    p.add_argument("--rate", type=float, default=MAX_FRAME_RATE, help="nominal source fps")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("power-report", help="current log -> power, battery life, GFLOPS/W")
    p.add_argument("--log", required=True, help="CSV timestamp_s,current_a,voltage_v")
    p.add_argument("--supply-voltage", type=float, default=None,
                   help="supply volts (default: use logged voltage)")
    p.add_argument("--battery", default=None, metavar="VOLTS:AH")
    p.add_argument("--flops", type=float, default=None)
    p.add_argument("--efficiency-power", type=float, default=None, metavar="WATTS",
                   help="power figure paired with --flops (default: average power)")
    p.add_argument("--report", default="-")
    p.set_defaults(func=cmd_power_report)

    p = sub.add_parser("plotdata", help="sweep CSV/JSON or power logs -> whitespace series files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (FlopforgeError, OSError) as exc:
        print(f"flopforge {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
