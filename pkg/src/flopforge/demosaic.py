"""Bilinear demosaicing of 8-bit BGGR Bayer mosaics.

Cell layout (row, column parity)::

    (even, even) B   (even, odd) G
    (odd, even)  G   (odd, odd)  R

Each missing channel is the mean of the nearest samples of that channel:
the four diagonals, the four edge neighbours, or the two neighbours along
one axis. The frame is padded by mirroring about its first/last row and
column, which keeps the CFA phase intact at the border.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError


@dataclass(frozen=True)
class BayerImage:
    samples: np.ndarray  # (height, width) uint8, BGGR

    def __post_init__(self):
        check_mosaic(self.samples)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]


def check_mosaic(raw) -> np.ndarray:
    raw = np.asarray(raw)
    if raw.ndim != 2:
        raise FormatError(f"a Bayer mosaic is a single-channel 2-D array, got shape {raw.shape}")
    h, w = raw.shape
    if h == 0 or w == 0 or h % 2 or w % 2:
        raise FormatError(f"Bayer mosaic dimensions must be even and non-zero, got {w}x{h}")
    if raw.dtype != np.uint8:
        raise FormatError(f"expected 8-bit samples, got {raw.dtype}")
    return raw


def _avg2(a, b):
    return (a + b + 1) // 2


def _avg4(a, b, c, d):
    return (a + b + c + d + 2) // 4


def demosaic_bilinear(raw) -> np.ndarray:
    """Demosaic a BGGR mosaic to an (H, W, 3) uint8 RGB image."""
    if isinstance(raw, BayerImage):
        raw = raw.samples
    raw = check_mosaic(raw)
    h, w = raw.shape
    p = np.pad(raw.astype(np.int32), 1, mode="reflect")

    def at(dr, dc):
        # the padded view shifted by (dr, dc), same shape as raw
        return p[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]

    centre = at(0, 0)
    cross = _avg4(at(-1, 0), at(1, 0), at(0, -1), at(0, 1))
    diag = _avg4(at(-1, -1), at(-1, 1), at(1, -1), at(1, 1))
    horiz = _avg2(at(0, -1), at(0, 1))
    vert = _avg2(at(-1, 0), at(1, 0))

    rgb = np.empty((h, w, 3), dtype=np.uint8)
    b_site = (slice(0, None, 2), slice(0, None, 2))
    g_brow = (slice(0, None, 2), slice(1, None, 2))
    g_rrow = (slice(1, None, 2), slice(0, None, 2))
    r_site = (slice(1, None, 2), slice(1, None, 2))

    rgb[b_site + (0,)] = diag[b_site]
    rgb[b_site + (1,)] = cross[b_site]
    rgb[b_site + (2,)] = centre[b_site]

    rgb[g_brow + (0,)] = vert[g_brow]
    rgb[g_brow + (1,)] = centre[g_brow]
    rgb[g_brow + (2,)] = horiz[g_brow]

    rgb[g_rrow + (0,)] = horiz[g_rrow]
    rgb[g_rrow + (1,)] = centre[g_rrow]
    rgb[g_rrow + (2,)] = vert[g_rrow]

    rgb[r_site + (0,)] = centre[r_site]
    rgb[r_site + (1,)] = cross[r_site]
    rgb[r_site + (2,)] = diag[r_site]
    return rgb


def demosaic_at(raw, rows, cols, padded: np.ndarray | None = None) -> np.ndarray:
    """RGB of selected pixels only, shape (len(rows), 3).

    Gives exactly the values :func:`demosaic_bilinear` produces at those
    positions. ``padded`` may carry a pre-padded int32 copy of ``raw``.
    """
    raw = check_mosaic(raw)
    if padded is None:
        padded = np.pad(raw.astype(np.int32), 1, mode="reflect")
    r = np.asarray(rows, dtype=np.intp) + 1
    c = np.asarray(cols, dtype=np.intp) + 1

    def at(dr, dc):
        return padded[r + dr, c + dc]

    centre = at(0, 0)
    cross = _avg4(at(-1, 0), at(1, 0), at(0, -1), at(0, 1))
    diag = _avg4(at(-1, -1), at(-1, 1), at(1, -1), at(1, 1))
    horiz = _avg2(at(0, -1), at(0, 1))
    vert = _avg2(at(-1, 0), at(1, 0))

    odd_r = (r - 1) % 2 == 1
    odd_c = (c - 1) % 2 == 1
    is_b = ~odd_r & ~odd_c
    is_r = odd_r & odd_c
    g_brow = ~odd_r & odd_c

    red = np.where(is_r, centre, np.where(is_b, diag, np.where(g_brow, vert, horiz)))
    green = np.where(is_b | is_r, cross, centre)
    blue = np.where(is_b, centre, np.where(is_r, diag, np.where(g_brow, horiz, vert)))
    return np.stack([red, green, blue], axis=-1).astype(np.uint8)


def mosaic_from_rgb(rgb: np.ndarray) -> np.ndarray:
    """Sample an RGB image through a BGGR filter array (synthetic test frames)."""
    rgb = np.asarray(rgb)
    h, w = rgb.shape[:2]
    raw = np.empty((h, w), dtype=np.uint8)
    raw[0::2, 0::2] = rgb[0::2, 0::2, 2]
    raw[0::2, 1::2] = rgb[0::2, 1::2, 1]
    raw[1::2, 0::2] = rgb[1::2, 0::2, 1]
    raw[1::2, 1::2] = rgb[1::2, 1::2, 0]
    return raw
