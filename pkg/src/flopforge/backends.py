"""Execution backends for the rotation kernel.

A backend runs W independent kernel instances and reports the wall-clock
time of that execution together with every worker's readout and final
block. Backends are looked up by id; third-party backends register through
:func:`register_backend` or the ``flopforge.backends`` entry-point group.
"""

from __future__ import annotations

import abc
import logging
import os
import time
from dataclasses import dataclass
from importlib import metadata
from typing import Callable

import numpy as np

from .errors import BackendError, ConfigurationError
from .rotbench import RotationKernelSpec

log = logging.getLogger(__name__)

THREADS_ENV = "FLOPFORGE_THREADS"
ENTRY_POINT_GROUP = "flopforge.backends"


@dataclass
class KernelResult:
    elapsed_s: float
    outputs: np.ndarray  # (W,) float32 readouts
    blocks: np.ndarray  # (W, 2, D) float32 final points


class ComputeBackend(abc.ABC):
    id: str = ""
    capability: str = ""  # "scalar" | "parallel" | "accelerator"

    def available(self) -> bool:
        return True

    @abc.abstractmethod
    def execute(self, spec: RotationKernelSpec, workers: int) -> KernelResult:
        """Run ``workers`` kernel instances; time only the kernel itself."""

    def describe(self) -> dict:
        return {"id": self.id, "capability": self.capability}


def _allocate(spec, workers):
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    outputs = np.empty(workers, dtype=np.float32)
    blocks = np.empty((workers, 2, spec.dimensionality), dtype=np.float32)
    return outputs, blocks


class ScalarBackend(ComputeBackend):
    """Sequential reference: one worker after another on a single thread."""

    id = "scalar"
    capability = "scalar"

    def execute(self, spec, workers):
        from . import _kernels

        outputs, blocks = _allocate(spec, workers)
        c, s = spec.coefficients()
        t0 = time.perf_counter()
        _kernels.rotate_scalar(workers, spec.dimensionality, spec.iterations, c, s, outputs, blocks)
        elapsed = time.perf_counter() - t0
        return KernelResult(elapsed, outputs, blocks)


def thread_cap(default: int | None = None) -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be >= 1, got {n}")
    return n


class ParallelBackend(ComputeBackend):
    """All hardware threads, workers grouped into SIMD-width lanes."""

    id = "parallel"
    capability = "parallel"

    def __init__(self, threads: int | None = None):
        self.threads = threads

    def _thread_count(self):
        import numba

        limit = numba.config.NUMBA_NUM_THREADS
        wanted = self.threads or thread_cap() or limit
        return max(1, min(wanted, limit))

    def execute(self, spec, workers):
        import numba

        from . import _kernels

        outputs, blocks = _allocate(spec, workers)
        c, s = spec.coefficients()
        numba.set_num_threads(self._thread_count())
        t0 = time.perf_counter()
        _kernels.rotate_parallel(workers, spec.dimensionality, spec.iterations, c, s, outputs, blocks)
        elapsed = time.perf_counter() - t0
        return KernelResult(elapsed, outputs, blocks)

    def describe(self):
        d = super().describe()
        d["threads"] = self._thread_count()
        return d


class NumpyBackend(ComputeBackend):
    """Vectorised across workers with numpy ufuncs; needs no compiler.

    Memory grows as 8*D*W bytes per temporary, so this is meant for modest W.
    """

    id = "numpy"
    capability = "parallel"

    def execute(self, spec, workers):
        outputs, blocks = _allocate(spec, workers)
        c, s = spec.coefficients()
        t0 = time.perf_counter()
        x = np.ones((spec.dimensionality, workers), dtype=np.float32)
        y = np.zeros_like(x)
        for _ in range(spec.iterations):
            x, y = c * x - s * y, s * x + c * y
        acc = x[0] * y[0]
        for d in range(1, spec.dimensionality):
            acc = acc + x[d] * y[d]
        elapsed = time.perf_counter() - t0
        outputs[:] = acc
        blocks[:, 0, :] = x.T
        blocks[:, 1, :] = y.T
        return KernelResult(elapsed, outputs, blocks)


_REGISTRY: dict[str, Callable[[], ComputeBackend]] = {
    ScalarBackend.id: ScalarBackend,
    ParallelBackend.id: ParallelBackend,
    NumpyBackend.id: NumpyBackend,
}
_entry_points_loaded = False


def register_backend(backend_id: str, factory: Callable[[], ComputeBackend]) -> None:
    _REGISTRY[backend_id] = factory


def unregister_backend(backend_id: str) -> None:
    _REGISTRY.pop(backend_id, None)


def _load_entry_points():
    global _entry_points_loaded
    if _entry_points_loaded:
        return
    _entry_points_loaded = True
    for ep in metadata.entry_points(group=ENTRY_POINT_GROUP):
        if ep.name in _REGISTRY:
            continue
        try:
            _REGISTRY[ep.name] = ep.load()
        except Exception as exc:
            log.warning("could not load backend plugin %s: %s", ep.name, exc)


def backend_ids() -> list[str]:
    _load_entry_points()
    return sorted(_REGISTRY)


def get_backend(backend_id: str) -> ComputeBackend:
    _load_entry_points()
    try:
        factory = _REGISTRY[backend_id]
    except KeyError:
        raise BackendError(
            f"unknown backend {backend_id!r}; available: {', '.join(sorted(_REGISTRY))}"
        ) from None
    backend = factory()
    if not backend.available():
        raise BackendError(f"backend {backend_id!r} is not available on this host")
    return backend
