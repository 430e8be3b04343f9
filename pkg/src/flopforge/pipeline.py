"""Instrumented camera -> preprocess -> detector pipeline.

Each Bayer frame is demosaiced and reprojected, then handed to a detector
stage. The harness times every stage per frame with a monotonic clock and
reduces the series to mean / sample standard deviation.

Preprocessing runs in one of two modes:

``fused``
    Demosaic only the source pixels the remap table samples and resample
    them in the same pass. This is the default.
``sequential``
    Demosaic the whole frame, then reproject it. Stage times are recorded
    separately, which the timing-decomposition checks rely on.

Both modes produce identical images.
"""

from __future__ import annotations

import abc
import itertools
import json
import logging
import math
import shlex
import statistics
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .demosaic import BayerImage, check_mosaic, demosaic_at, demosaic_bilinear
from .errors import ConfigurationError, FormatError, StatisticsError
from .imageio import encode_ppm, read_pgm
from .lensproject import EquidistantLens, RectilinearCamera, RemapTable

log = logging.getLogger(__name__)

MAX_FRAME_RATE = 60.0
SD_FORMULA = "sample (n-1)"


def summarize(series: Iterable[float]) -> tuple[float, float]:
    """Mean and sample standard deviation; a single sample has SD 0."""
    data = [float(x) for x in series]
    if not data:
        raise StatisticsError("cannot summarise an empty series")
    mean = statistics.fmean(data)
    sd = statistics.stdev(data, mean) if len(data) > 1 else 0.0
    return mean, sd


# -- detector stages -----------------------------------------------------------

@dataclass(frozen=True)
class Detection:
    box: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max in pixels
    label: str
    confidence: float

    def __post_init__(self):
        if len(self.box) != 4:
            raise FormatError(f"a box has 4 coordinates, got {self.box!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise FormatError(f"confidence must lie in [0, 1], got {self.confidence}")

    @classmethod
    def from_dict(cls, d: dict) -> Detection:
        try:
            return cls(tuple(float(v) for v in d["box"]), str(d["label"]), float(d["confidence"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed detection {d!r}: {exc}") from exc

    def to_dict(self) -> dict:
        return {"box": list(self.box), "label": self.label, "confidence": self.confidence}


class DetectorStage(abc.ABC):
    id: str = ""

    @abc.abstractmethod
    def detect(self, rgb: np.ndarray) -> list[Detection]:
        ...

    def close(self) -> None:
        pass

    def describe(self) -> dict:
        return {"id": self.id}


class StubDetector(DetectorStage):
    """Sleeps for a scripted delay and returns scripted detections.

    ``delays`` is cycled frame by frame, so ``[0.1, 0.2]`` alternates.
    """

    id = "stub"

    def __init__(self, delays: float | Sequence[float] = 0.0,
                 detections: Sequence[Detection] = ()):
        if isinstance(delays, (int, float)):
            delays = [float(delays)]
        delays = [float(d) for d in delays]
        if not delays or any(d < 0 or not math.isfinite(d) for d in delays):
            raise ConfigurationError(f"stub delays must be finite and >= 0, got {delays}")
        self.delays = delays
        self.detections = list(detections)
        self._schedule = itertools.cycle(delays)

    def detect(self, rgb):
        delay = next(self._schedule)
        if delay > 0:
            time.sleep(delay)
        return list(self.detections)

    def describe(self):
        return {"id": self.id, "delays_s": self.delays, "scripted_detections": len(self.detections)}


def stub_detector(delays: float | Sequence[float] = 0.0,
                  detections: Sequence[Detection] = ()) -> StubDetector:
    return StubDetector(delays, detections)


class ExecDetector(DetectorStage):
    """Runs an external command as the detector.

    Frames go to the command's stdin as binary PPM (P6), one after another.
    For each frame the command writes one line to stdout: a JSON array of
    ``{"box": [x0, y0, x1, y1], "label": str, "confidence": float}``.
    """

    id = "exec"

    def __init__(self, command: str | Sequence[str]):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.argv:
            raise ConfigurationError("exec detector needs a command")
        self._proc: subprocess.Popen | None = None

    def _start(self):
        try:
            self._proc = subprocess.Popen(
                self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
            )
        except OSError as exc:
            raise ConfigurationError(f"cannot start detector {self.argv[0]!r}: {exc}") from exc

    def detect(self, rgb):
        if self._proc is None:
            self._start()
        proc = self._proc
        try:
            proc.stdin.write(encode_ppm(rgb))
            proc.stdin.flush()
        except BrokenPipeError as exc:
            raise RuntimeError(f"detector exited with status {proc.poll()}") from exc
        line = proc.stdout.readline()
        if not line:
            raise RuntimeError(f"detector closed its output (status {proc.poll()})")
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"detector wrote invalid JSON: {line[:80]!r}") from exc
        if not isinstance(payload, list):
            raise FormatError("detector output must be a JSON array of detections")
        return [Detection.from_dict(d) for d in payload]

    def close(self):
        if self._proc is None:
            return
        proc, self._proc = self._proc, None
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
        proc.stdout.close()

    def describe(self):
        return {"id": self.id, "command": self.argv}


def make_detector(spec: str) -> DetectorStage:
    """Build a detector from a CLI string: ``stub``, ``stub:<ms>[,<ms>...]`` or ``exec:<cmd>``."""
    if spec == "stub":
        return StubDetector()
    if spec.startswith("stub:"):
        try:
            delays = [float(x) / 1000 for x in spec[5:].split(",")]
        except ValueError:
            raise ConfigurationError(f"bad stub delay list {spec!r}") from None
        return StubDetector(delays)
    if spec.startswith("exec:"):
        return ExecDetector(spec[5:])
    raise ConfigurationError(f"unknown detector {spec!r}; use stub, stub:<ms> or exec:<cmd>")


# -- frames and preprocessing ----------------------------------------------------

@dataclass
class FrameSource:
    frames: list[np.ndarray]
    rate_hz: float = MAX_FRAME_RATE

    def __post_init__(self):
        self.frames = [f.samples if isinstance(f, BayerImage) else check_mosaic(f) for f in self.frames]
        if not self.frames:
            raise ConfigurationError("frame source is empty")
        shapes = {f.shape for f in self.frames}
        if len(shapes) != 1:
            raise FormatError(f"frames differ in size: {sorted(shapes)}")
        if not 0 < self.rate_hz <= MAX_FRAME_RATE:
            raise ConfigurationError(f"frame rate must lie in (0, {MAX_FRAME_RATE}] fps")

    @classmethod
    def from_directory(cls, path, rate_hz: float = MAX_FRAME_RATE) -> FrameSource:
        files = sorted(Path(path).glob("*.pgm"))
        if not files:
            raise ConfigurationError(f"no .pgm frames in {path}")
        return cls([read_pgm(p) for p in files], rate_hz)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames[0].shape

    def __len__(self):
        return len(self.frames)


class Preprocessor:
    """Demosaic + reproject with a remap table built once up front."""

    def __init__(self, lens: EquidistantLens, cam: RectilinearCamera, mode: str = "fused"):
        if mode not in ("fused", "sequential"):
            raise ConfigurationError(f"mode must be 'fused' or 'sequential', got {mode!r}")
        self.lens, self.cam, self.mode = lens, cam, mode
        self.table = RemapTable.build(lens, cam)
        rows, cols = self.table.source_pixels()
        self._rows, self._cols = rows, cols

    def fused(self, raw: np.ndarray) -> np.ndarray:
        buf = np.zeros((self.lens.height, self.lens.width, 3), dtype=np.uint8)
        buf[self._rows, self._cols] = demosaic_at(raw, self._rows, self._cols)
        return self.table.apply(buf)

    def __call__(self, raw: np.ndarray) -> tuple[np.ndarray, dict[str, float]]:
        """Returns the RGB frame and per-stage times in seconds."""
        if raw.shape != (self.lens.height, self.lens.width):
            raise FormatError(
                f"frame is {raw.shape[1]}x{raw.shape[0]}, lens expects {self.lens.width}x{self.lens.height}"
            )
        if self.mode == "fused":
            t0 = time.perf_counter()
            out = self.fused(raw)
            return out, {"preprocess": time.perf_counter() - t0}
        t0 = time.perf_counter()
        rgb = demosaic_bilinear(raw)
        t1 = time.perf_counter()
        out = self.table.apply(rgb)
        t2 = time.perf_counter()
        return out, {"demosaic": t1 - t0, "reproject": t2 - t1, "preprocess": t2 - t0}


# -- report ------------------------------------------------------------------------

@dataclass
class FrameRecord:
    index: int
    stages: dict[str, float]
    total_s: float
    detections: list[Detection]


@dataclass
class PipelineReport:
    frames_in: int
    records: list[FrameRecord]
    wall_s: float
    config: dict = field(default_factory=dict)
    failure: dict | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None

    def series(self, stage: str) -> list[float]:
        if stage == "total":
            return [r.total_s for r in self.records]
        return [r.stages[stage] for r in self.records if stage in r.stages]

    def stage_names(self) -> list[str]:
        names = []
        for r in self.records:
            for k in r.stages:
                if k not in names:
                    names.append(k)
        return names + ["total"]

    def stats(self, stage: str) -> tuple[float, float] | None:
        s = self.series(stage)
        return summarize(s) if s else None

    @property
    def throughput_fps(self) -> float:
        return len(self.records) / self.wall_s if self.wall_s > 0 else 0.0

    def to_dict(self) -> dict:
        stages = {}
        for name in self.stage_names():
            s = self.series(name)
            entry = {"series_s": s, "n": len(s)}
            if s:
                entry["mean_s"], entry["sd_s"] = summarize(s)
            stages[name] = entry
        return {
            "frames_in": self.frames_in,
            "frames_out": len(self.records),
            "wall_s": self.wall_s,
            "throughput_fps": self.throughput_fps,
            "sd_formula": SD_FORMULA,
            "stages": stages,
            "detections": [[d.to_dict() for d in r.detections] for r in self.records],
            "failure": self.failure,
            "config": self.config,
        }


def run_pipeline(source: FrameSource, lens: EquidistantLens, cam: RectilinearCamera,
                 detector: DetectorStage, mode: str = "fused", pipelined: bool = False,
                 pace: bool = False, preprocessor: Preprocessor | None = None,
                 outputs: list | None = None) -> PipelineReport:
    """Push every frame through preprocess then detect, timing each stage.

    A stage failure on frame k stops the run; the report then covers frames
    before k and carries a ``failure`` entry. With ``pipelined`` the next
    frame is preprocessed while the detector works on the current one.
    ``pace`` holds each frame until its nominal arrival time at the source
    rate. Preprocessed frames are appended to ``outputs`` when given.
    """
    pre = preprocessor or Preprocessor(lens, cam, mode)
    config = {
        "mode": pre.mode,
        "pipelined": pipelined,
        "paced": pace,
        "frame_rate_hz": source.rate_hz,
        "frame_size": [source.shape[1], source.shape[0]],
        "lens": asdict(lens),
        "camera": asdict(cam),
        "detector": detector.describe(),
    }
    records: list[FrameRecord] = []
    failure = None
    period = 1.0 / source.rate_hz

    def preprocess(i):
        t0 = time.perf_counter()
        rgb, times = pre(source.frames[i])
        return t0, rgb, times

    pool = ThreadPoolExecutor(max_workers=1) if pipelined else None
    start = time.perf_counter()
    try:
        pending = pool.submit(preprocess, 0) if pool else None
        for i in range(len(source)):
            if pace:
                wait = start + i * period - time.perf_counter()
                if wait > 0:
                    time.sleep(wait)
            stage = "preprocess"
            try:
                if pool:
                    t0, rgb, times = pending.result()
                    if i + 1 < len(source):
                        pending = pool.submit(preprocess, i + 1)
                else:
                    t0, rgb, times = preprocess(i)
                stage = "detect"
                td = time.perf_counter()
                dets = detector.detect(rgb)
                t_end = time.perf_counter()
            except Exception as exc:
                failure = {"frame": i, "stage": stage, "error": f"{type(exc).__name__}: {exc}"}
                log.error("frame %d failed in %s: %s", i, stage, exc)
                break
            times = dict(times, detect=t_end - td)
            records.append(FrameRecord(i, times, t_end - t0, list(dets)))
            if outputs is not None:
                outputs.append(rgb)
    finally:
        wall = time.perf_counter() - start
        if pool:
            pool.shutdown(wait=True, cancel_futures=True)
    return PipelineReport(len(source), records, wall, config, failure)
