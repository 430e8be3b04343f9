"""8-bit binary netpbm I/O: PGM (P5) for mosaics, PPM (P6) for RGB."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError


def _open(path) -> Image.Image:
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: not a readable netpbm image ({exc})") from exc
    if img.format != "PPM":
        raise FormatError(f"{path}: expected a binary PGM/PPM file, got {img.format}")
    return img


def read_pgm(path) -> np.ndarray:
    img = _open(path)
    if img.mode != "L":
        raise FormatError(f"{path}: expected 8-bit greyscale (P5), got mode {img.mode}")
    return np.asarray(img, dtype=np.uint8).copy()


def read_ppm(path) -> np.ndarray:
    img = _open(path)
    if img.mode != "RGB":
        raise FormatError(f"{path}: expected 8-bit RGB (P6), got mode {img.mode}")
    return np.asarray(img, dtype=np.uint8).copy()


def encode_ppm(rgb: np.ndarray) -> bytes:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise FormatError(f"expected an (H, W, 3) image, got shape {rgb.shape}")
    h, w = rgb.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + rgb.tobytes()


def write_ppm(path, rgb: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(rgb))


def write_pgm(path, grey: np.ndarray) -> None:
    grey = np.asarray(grey, dtype=np.uint8)
    if grey.ndim != 2:
        raise FormatError(f"expected a 2-D image, got shape {grey.shape}")
    h, w = grey.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(grey).tobytes())
