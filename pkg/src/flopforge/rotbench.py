"""Rotation micro-kernel, FLOPS accounting and worker sweeps.

The kernel rotates D two-dimensional points by a fixed 2 rad rotation N
times, then reduces the final block to a single value (the readout) so the
work cannot be elided. Each of W workers runs the kernel independently and
the sweep varies W.
"""

from __future__ import annotations

import csv
import logging
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, TextIO

import numpy as np

from .errors import BackendError, ConfigurationError, FormatError, MeasurementError

log = logging.getLogger(__name__)

ROTATION_ANGLE = 2.0
DEFAULT_ITERATIONS = 40_000
VALID_DIMENSIONS = (1, 2, 4)
FLOPS_PER_ITERATION = 6  # 4 multiplications + 2 additions per point

# Worker sweeps used for the two device classes.
GPU_REGIME = (256, 1_024_000, 256)
CPU_REGIME = (1, 4_096, 32)

CSV_HEADER = ("workers", "elapsed_s", "flops", "checksum")


@dataclass(frozen=True)
class RotationKernelSpec:
    dimensionality: int = 4
    iterations: int = DEFAULT_ITERATIONS
    angle: float = ROTATION_ANGLE

    def __post_init__(self):
        if self.dimensionality not in VALID_DIMENSIONS:
            raise ConfigurationError(
                f"dimensionality must be one of {VALID_DIMENSIONS}, got {self.dimensionality}"
            )
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be >= 1, got {self.iterations}")
        if self.angle != ROTATION_ANGLE:
            raise ConfigurationError(f"rotation angle is fixed at {ROTATION_ANGLE} rad")

    def coefficients(self) -> tuple[np.float32, np.float32]:
        """cos and sin of the rotation angle, evaluated in double and rounded to float32."""
        return np.float32(math.cos(self.angle)), np.float32(math.sin(self.angle))

    def drift_tolerance(self) -> float:
        """Per-component bound on float32 drift from the exact rotation."""
        return max(0.01, 2 * self.iterations * float(np.finfo(np.float32).eps))


@dataclass(frozen=True)
class SweepConfig:
    worker_start: int
    worker_end: int
    worker_step: int
    kernel: RotationKernelSpec = field(default_factory=RotationKernelSpec)
    backend_id: str = "parallel"

    def __post_init__(self):
        if self.worker_start < 1:
            raise ConfigurationError("worker_start must be >= 1")
        if self.worker_step < 1:
            raise ConfigurationError("worker_step must be >= 1")
        if self.worker_end < self.worker_start:
            raise ConfigurationError("worker_end must be >= worker_start")

    @classmethod
    def gpu_regime(cls, kernel=None, backend_id="parallel") -> SweepConfig:
        return cls(*GPU_REGIME, kernel=kernel or RotationKernelSpec(), backend_id=backend_id)

    @classmethod
    def cpu_regime(cls, kernel=None, backend_id="parallel") -> SweepConfig:
        return cls(*CPU_REGIME, kernel=kernel or RotationKernelSpec(), backend_id=backend_id)

    def worker_counts(self) -> range:
        # Only counts reachable from start in whole steps; end itself may be skipped.
        return range(self.worker_start, self.worker_end + 1, self.worker_step)

    def __len__(self):
        return (self.worker_end - self.worker_start) // self.worker_step + 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["points"] = len(self)
        return d


@dataclass
class BenchRecord:
    workers: int
    elapsed_s: float
    flops: float
    checksum: float
    warnings: list[str] = field(default_factory=list)

    def csv_row(self) -> tuple:
        return (self.workers, repr(self.elapsed_s), repr(self.flops), repr(self.checksum))


def initial_block(dimensionality: int) -> np.ndarray:
    """The (2, D) float32 block with every point at (1, 0)."""
    if dimensionality not in VALID_DIMENSIONS:
        raise ConfigurationError(
            f"dimensionality must be one of {VALID_DIMENSIONS}, got {dimensionality}"
        )
    block = np.zeros((2, dimensionality), dtype=np.float32)
    block[0] = 1.0
    return block


def rotate_iterative(spec: RotationKernelSpec, x0=None, iterations: int | None = None) -> np.ndarray:
    """Rotate every column of ``x0`` by the kernel's rotation, repeatedly.

    ``x0`` is a (2, D) block whose columns are points; it defaults to all
    points at (1, 0). ``iterations`` overrides ``spec.iterations`` and may
    be zero. Arithmetic is float32 throughout, matching the compiled
    backends bit for bit.
    """
    if x0 is None:
        block = initial_block(spec.dimensionality)
    else:
        block = np.array(x0, dtype=np.float32).reshape(2, -1)
        if block.shape[1] not in VALID_DIMENSIONS:
            raise ConfigurationError(
                f"dimensionality must be one of {VALID_DIMENSIONS}, got {block.shape[1]}"
            )
    n = spec.iterations if iterations is None else iterations
    if n < 0:
        raise ConfigurationError("iterations must be >= 0")
    c, s = spec.coefficients()
    x, y = block[0].copy(), block[1].copy()
    for _ in range(n):
        x, y = c * x - s * y, s * x + c * y
    return np.stack([x, y])


def rotate_closed_form(x0, n: int, angle: float = ROTATION_ANGLE) -> np.ndarray:
    """Rotate a 2-vector once by ``n * angle`` in double precision."""
    if n < 0:
        raise ConfigurationError("n must be >= 0")
    phi = math.fmod(n * angle, 2 * math.pi)
    c, s = math.cos(phi), math.sin(phi)
    x, y = float(x0[0]), float(x0[1])
    return np.array([c * x - s * y, s * x + c * y])


def readout(xn: np.ndarray) -> np.float32:
    """Inner product of the x-components with the y-components of a block.

    Accumulates left to right in float32 (D multiplies, D-1 adds), the same
    order the compiled kernels use.
    """
    xn = np.asarray(xn, dtype=np.float32).reshape(2, -1)
    acc = xn[0, 0] * xn[1, 0]
    for d in range(1, xn.shape[1]):
        acc = acc + xn[0, d] * xn[1, d]
    return np.float32(acc)


def compute_flops(dimensionality: int, iterations: int, workers: int, elapsed_s: float) -> float:
    """6*D*N*W / t.

    The readout's extra (2D - 1) operations per worker are not counted;
    see :func:`readout_flops` for that term.
    """
    if not elapsed_s > 0:
        raise MeasurementError(f"elapsed time must be positive, got {elapsed_s}")
    return FLOPS_PER_ITERATION * dimensionality * iterations * workers / elapsed_s


def readout_flops(dimensionality: int, workers: int, elapsed_s: float) -> float:
    if not elapsed_s > 0:
        raise MeasurementError(f"elapsed time must be positive, got {elapsed_s}")
    return (2 * dimensionality - 1) * workers / elapsed_s


def _timer_resolution() -> float:
    return time.get_clock_info("perf_counter").resolution


def verify_blocks(spec: RotationKernelSpec, blocks: np.ndarray) -> float:
    """Largest per-component deviation of worker blocks from the exact rotation.

    Raises :class:`BackendError` if it exceeds the kernel's drift tolerance.
    """
    expected = rotate_closed_form((1.0, 0.0), spec.iterations, spec.angle)
    dev = np.abs(blocks.astype(np.float64) - expected[None, :, None])
    worst = float(dev.max()) if dev.size else 0.0
    if not worst <= spec.drift_tolerance():
        raise BackendError(
            f"kernel result drifted {worst:.3g} from the exact rotation "
            f"(tolerance {spec.drift_tolerance():.3g})"
        )
    return worst


def run_point(spec: RotationKernelSpec, workers: int, backend, repeats: int = 1,
              verify: bool = True) -> BenchRecord:
    """Measure one load point: an untimed warm-up then ``repeats`` timed runs.

    The reported elapsed time is the median of the timed runs.
    """
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    if repeats < 1:
        raise ConfigurationError("repeats must be >= 1")
    if not backend.available():
        raise BackendError(f"backend {backend.id!r} is not available on this host")

    backend.execute(spec, workers)
    times = []
    result = None
    for _ in range(repeats):
        result = backend.execute(spec, workers)
        times.append(result.elapsed_s)
    elapsed = statistics.median(times)

    warnings = []
    resolution = _timer_resolution()
    if elapsed < 100 * resolution:
        warnings.append(
            f"elapsed time {elapsed:.3g}s is within 100x of the timer resolution {resolution:.3g}s"
        )
        if elapsed <= 0:
            elapsed = resolution
    if verify:
        verify_blocks(spec, result.blocks)

    checksum = float(np.sum(result.outputs, dtype=np.float64))
    return BenchRecord(
        workers=workers,
        elapsed_s=elapsed,
        flops=compute_flops(spec.dimensionality, spec.iterations, workers, elapsed),
        checksum=checksum,
        warnings=warnings,
    )


class SweepAborted(BackendError):
    """A sweep point failed; ``records`` holds the points completed before it."""

    def __init__(self, message: str, records: list[BenchRecord]):
        super().__init__(message)
        self.records = records


def run_sweep(config: SweepConfig, backend, repeats: int = 1, verify: bool = True,
              progress: Callable[[BenchRecord], None] | None = None) -> list[BenchRecord]:
    records: list[BenchRecord] = []
    for w in config.worker_counts():
        try:
            rec = run_point(config.kernel, w, backend, repeats=repeats, verify=verify)
        except Exception as exc:
            raise SweepAborted(f"sweep aborted at W={w}: {exc}", records) from exc
        log.debug("W=%d t=%.6fs flops=%.4g", w, rec.elapsed_s, rec.flops)
        records.append(rec)
        if progress is not None:
            progress(rec)
    return records


def write_csv(records: Iterable[BenchRecord], fh: TextIO) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in sorted(records, key=lambda r: r.workers):
        writer.writerow(rec.csv_row())


def read_csv(fh: TextIO) -> list[BenchRecord]:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise FormatError(f"not a sweep CSV: expected header {','.join(CSV_HEADER)}")
    records = []
    for row in reader:
        if not row:
            continue
        records.append(BenchRecord(int(row[0]), float(row[1]), float(row[2]), float(row[3])))
    return records
