"""Equidistant (fisheye) to rectilinear reprojection by ray casting.

For every pixel of the rectilinear target a ray is cast from the camera
centre through that pixel; the ray's polar angle fixes the radius in the
equidistant source image and its azimuth is carried over unchanged. The
resulting source coordinates depend only on the two camera models, so they
are computed once as a :class:`RemapTable` and reused for every frame.

Coordinates
-----------
Screen-centred coordinates put (0, 0) at the image centre with +x right and
+y up. The centre of a W x H image lies at column (W - 1)/2, row (H - 1)/2,
so for even sizes it falls between pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

# Below this polar angle the ray is treated as lying on the optical axis.
THETA_EPS = 1e-9


def focal_length(width: int, height: int, fov: float) -> float:
    """Focal length in pixels for a rectilinear image whose diagonal spans ``fov``.

    Uses the norm of (width - 1, height - 1), i.e. corner-centre to
    corner-centre.
    """
    if not 0 < fov < math.pi:
        raise ConfigurationError(
            f"rectilinear fov must lie in (0, pi) rad, got {fov}; at pi the image is infinite"
        )
    return math.hypot(width - 1, height - 1) / (2 * math.tan(fov / 2))


@dataclass(frozen=True)
class EquidistantLens:
    width: int
    height: int
    fov: float
    r_pp: float | None = None  # radians per pixel; defaults to fov / width

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigurationError("lens image size must be positive")
        if not self.fov > 0:
            raise ConfigurationError("lens fov must be positive")
        if self.r_pp is None:
            object.__setattr__(self, "r_pp", self.fov / self.width)
        if not self.r_pp > 0:
            raise ConfigurationError("r_pp must be positive")
        # The image's radial extent must be able to hold the lens circle's
        # edge along at least one axis.
        half_extent = max(self.width, self.height) / 2
        if self.r_pp * half_extent < self.fov / 2 * (1 - 1e-9):
            raise ConfigurationError(
                f"r_pp={self.r_pp:.6g} rad/px cannot cover a {math.degrees(self.fov):.4g} deg "
                f"lens inside a {self.width}x{self.height} image"
            )


@dataclass(frozen=True)
class RectilinearCamera:
    width: int
    height: int
    fov: float
    focal: float = field(init=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigurationError("camera image size must be positive")
        object.__setattr__(self, "focal", focal_length(self.width, self.height, self.fov))


def screen_grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Screen-centred (x, y) of every pixel centre, each of shape (height, width)."""
    xs = np.arange(width, dtype=np.float64) - (width - 1) / 2
    ys = (height - 1) / 2 - np.arange(height, dtype=np.float64)
    return np.broadcast_to(xs[None, :], (height, width)), np.broadcast_to(ys[:, None], (height, width))


def screen_to_image(sx, sy, width: int, height: int):
    """Screen-centred coordinates to (column, row)."""
    return np.add(sx, (width - 1) / 2), np.subtract((height - 1) / 2, sy)


def image_to_screen(col, row, width: int, height: int):
    return np.subtract(col, (width - 1) / 2), np.subtract((height - 1) / 2, row)


def pixel_ray(sx, sy, f: float) -> np.ndarray:
    """Unit ray (v_x, v_y, v_z) through screen point (sx, sy); v_x is along the axis.

    Accepts scalars or arrays; the ray components are stacked on the last axis.
    """
    if not f > 0:
        raise ConfigurationError("focal length must be positive")
    sx, sy = np.broadcast_arrays(np.asarray(sx, dtype=np.float64), np.asarray(sy, dtype=np.float64))
    norm = np.sqrt(f * f + sx * sx + sy * sy)
    return np.stack([f / norm, sx / norm, sy / norm], axis=-1)


def equidistant_lookup(v, r_pp: float) -> np.ndarray:
    """Screen-centred source position for a unit ray in an equidistant lens.

    The polar angle theta is measured from the optical axis and the
    position is theta / (r_pp * sin(theta)) * (v_y, v_z), which has radius
    theta / r_pp. Rays within ``THETA_EPS`` of the axis land on the centre.
    """
    if not r_pp > 0:
        raise ConfigurationError("r_pp must be positive")
    v = np.asarray(v, dtype=np.float64)
    vx, vy, vz = v[..., 0], v[..., 1], v[..., 2]
    # sin(theta) is the length of the off-axis part; atan2 equals
    # arccos(v_x) for unit rays and keeps full precision near the axis.
    sin_theta = np.hypot(vy, vz)
    theta = np.arctan2(sin_theta, vx)
    on_axis = theta < THETA_EPS
    alpha = np.where(on_axis, 0.0, theta / (r_pp * np.where(on_axis, 1.0, sin_theta)))
    return np.stack([alpha * vy, alpha * vz], axis=-1)


def interpolate_bilinear(image: np.ndarray, col, row) -> np.ndarray:
    """Bilinear sample of an (H, W, C) image at real-valued (column, row).

    Samples outside [0, W-1] x [0, H-1] are black. Returns float64 values
    of shape ``col.shape + (C,)``; callers round when storing.
    """
    image = np.asarray(image)
    if image.ndim == 2:
        image = image[:, :, None]
    h, w = image.shape[:2]
    if h == 0 or w == 0:
        raise ConfigurationError("cannot sample an empty image")
    col = np.asarray(col, dtype=np.float64)
    row = np.asarray(row, dtype=np.float64)
    inside = (col >= 0) & (col <= w - 1) & (row >= 0) & (row <= h - 1)
    c0 = np.clip(np.floor(np.where(inside, col, 0)), 0, max(w - 2, 0)).astype(np.intp)
    r0 = np.clip(np.floor(np.where(inside, row, 0)), 0, max(h - 2, 0)).astype(np.intp)
    c1 = np.minimum(c0 + 1, w - 1)
    r1 = np.minimum(r0 + 1, h - 1)
    fc = np.where(inside, col - c0, 0.0)[..., None]
    fr = np.where(inside, row - r0, 0.0)[..., None]
    img = image.astype(np.float64, copy=False)
    top = img[r0, c0] * (1 - fc) + img[r0, c1] * fc
    bottom = img[r1, c0] * (1 - fc) + img[r1, c1] * fc
    out = top * (1 - fr) + bottom * fr
    out[~inside] = 0.0
    return out


def round_to_u8(values: np.ndarray) -> np.ndarray:
    """Round half away from zero and clamp to the 8-bit range."""
    v = np.asarray(values, dtype=np.float64)
    return np.clip(np.sign(v) * np.floor(np.abs(v) + 0.5), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class RemapTable:
    """Precomputed bilinear taps for every target pixel.

    ``r0, c0, r1, c1`` are the rows/columns of the 2x2 source neighbourhood
    and ``fr, fc`` the fractional offsets within it. ``valid`` masks target
    pixels whose source position falls inside the lens image; the rest are
    written black.
    """

    lens: EquidistantLens
    cam: RectilinearCamera
    src_col: np.ndarray
    src_row: np.ndarray
    r0: np.ndarray
    c0: np.ndarray
    r1: np.ndarray
    c1: np.ndarray
    fr: np.ndarray
    fc: np.ndarray
    valid: np.ndarray

    @classmethod
    def build(cls, lens: EquidistantLens, cam: RectilinearCamera) -> RemapTable:
        sx, sy = screen_grid(cam.width, cam.height)
        # A 1x1 camera has zero focal length; its only pixel is on the axis,
        # which any positive focal length maps to the lens centre.
        f = cam.focal if cam.focal > 0 else 1.0
        src = equidistant_lookup(pixel_ray(sx, sy, f), lens.r_pp)
        col, row = screen_to_image(src[..., 0], src[..., 1], lens.width, lens.height)
        valid = (col >= 0) & (col <= lens.width - 1) & (row >= 0) & (row <= lens.height - 1)
        c0 = np.clip(np.floor(np.where(valid, col, 0)), 0, max(lens.width - 2, 0)).astype(np.intp)
        r0 = np.clip(np.floor(np.where(valid, row, 0)), 0, max(lens.height - 2, 0)).astype(np.intp)
        tables = dict(
            src_col=col, src_row=row, r0=r0, c0=c0,
            r1=np.minimum(r0 + 1, lens.height - 1), c1=np.minimum(c0 + 1, lens.width - 1),
            fr=np.where(valid, row - r0, 0.0)[..., None], fc=np.where(valid, col - c0, 0.0)[..., None],
            valid=valid,
        )
        for arr in tables.values():
            arr.setflags(write=False)
        return cls(lens, cam, **tables)

    def source_pixels(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique (rows, cols) of every source pixel some valid target pixel reads."""
        w = self.lens.width
        v = self.valid
        flat = np.concatenate([
            (r[v] * w + c[v]) for r in (self.r0, self.r1) for c in (self.c0, self.c1)
        ])
        flat = np.unique(flat)
        return flat // w, flat % w

    def apply(self, src: np.ndarray) -> np.ndarray:
        """Resample an (H, W, C) uint8 source into the target camera."""
        src = np.asarray(src)
        if src.ndim == 2:
            src = src[:, :, None]
        if src.shape[:2] != (self.lens.height, self.lens.width):
            raise ConfigurationError(
                f"source is {src.shape[1]}x{src.shape[0]}, lens expects "
                f"{self.lens.width}x{self.lens.height}"
            )
        img = src.astype(np.float64)
        fr, fc = self.fr, self.fc
        top = img[self.r0, self.c0] * (1 - fc) + img[self.r0, self.c1] * fc
        bottom = img[self.r1, self.c0] * (1 - fc) + img[self.r1, self.c1] * fc
        out = top * (1 - fr) + bottom * fr
        out[~self.valid] = 0.0
        return round_to_u8(out)


def reproject(src: np.ndarray, lens: EquidistantLens, cam: RectilinearCamera,
              table: RemapTable | None = None) -> np.ndarray:
    """Reproject an equidistant RGB image onto a rectilinear camera."""
    if table is None:
        table = RemapTable.build(lens, cam)
    return table.apply(src)
