"""Compiled rotation kernels used by the scalar and parallel backends.

Both kernels run every worker from the same initial block (all points at
(1, 0)) and write the worker's readout plus its final 2xD block. Arithmetic
stays in float32 with no fast-math flags, so the two kernels are
bit-identical to each other and to the numpy reference path.
"""

import os

import numba
import numpy as np
from numba import njit, prange

# numba probes TBB first and warns when the system copy is too old.
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

# Workers per SIMD group in the parallel kernel; 16 float32 lanes fill an
# AVX-512 register and two AVX2 registers.
LANES = 16


@njit(cache=True)
def rotate_scalar(workers, dims, iterations, c, s, outputs, blocks):
    x = np.empty(dims, np.float32)
    y = np.empty(dims, np.float32)
    for w in range(workers):
        for d in range(dims):
            x[d] = np.float32(1.0)
            y[d] = np.float32(0.0)
        for _ in range(iterations):
            for d in range(dims):
                xv = x[d]
                yv = y[d]
                x[d] = c * xv - s * yv
                y[d] = s * xv + c * yv
        acc = x[0] * y[0]
        for d in range(1, dims):
            acc = acc + x[d] * y[d]
        outputs[w] = acc
        for d in range(dims):
            blocks[w, 0, d] = x[d]
            blocks[w, 1, d] = y[d]


@njit(parallel=True, cache=True)
def rotate_parallel(workers, dims, iterations, c, s, outputs, blocks):
    groups = (workers + LANES - 1) // LANES
    for g in prange(groups):
        base = g * LANES
        x = np.ones((dims, LANES), np.float32)
        y = np.zeros((dims, LANES), np.float32)
        for _ in range(iterations):
            for d in range(dims):
                for lane in range(LANES):
                    xv = x[d, lane]
                    yv = y[d, lane]
                    x[d, lane] = c * xv - s * yv
                    y[d, lane] = s * xv + c * yv
        for lane in range(LANES):
            w = base + lane
            if w < workers:
                acc = x[0, lane] * y[0, lane]
                for d in range(1, dims):
                    acc = acc + x[d, lane] * y[d, lane]
                outputs[w] = acc
                for d in range(dims):
                    blocks[w, 0, d] = x[d, lane]
                    blocks[w, 1, d] = y[d, lane]
