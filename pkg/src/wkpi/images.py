"""Persistence images: grid fitting, exact pixel integrals, and containers.

Diagram points are mapped to the birth-persistence plane by
``(b, d) -> (b, d - b)`` and smoothed by a spherical Gaussian of spread
``tau``.  Pixel values are the exact integrals of the resulting surface
over each pixel rectangle, computed as products of one-dimensional
Gaussian CDF differences.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import ndtr

from .persistence import PersistenceDiagram


def birth_persistence_transform(point) -> tuple:
    """Map a (birth, death) pair to (birth, death - birth)."""
    birth, death = point
    return (birth, death - birth)


def transformed_points(diagram: PersistenceDiagram) -> np.ndarray:
    """(n, 2) array of the diagram's points in the birth-persistence plane."""
    bd = diagram.birth_death_array()
    if bd.size == 0:
        return bd.reshape(0, 2)
    return np.column_stack([bd[:, 0], bd[:, 1] - bd[:, 0]])


@dataclass(frozen=True)
class GridSpec:
    """Square-pixel grid on a rectangle of the birth-persistence plane.

    The pixel side comes from the y-extent and resolution; the x-resolution
    is then the smallest pixel count covering the x-extent.  Pixels are
    indexed row-major with s = iy * x_resolution + ix, y increasing.
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    y_resolution: int = 40

    def __post_init__(self):
        if self.y_resolution < 1:
            raise ValueError("y_resolution must be positive")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("grid bounds must have positive extent")

    @property
    def pixel_size(self) -> float:
        return (self.y_max - self.y_min) / self.y_resolution

    @property
    def x_resolution(self) -> int:
        return int(math.ceil((self.x_max - self.x_min) / self.pixel_size - 1e-12))

    @property
    def size(self) -> int:
        return self.x_resolution * self.y_resolution

    def x_edges(self) -> np.ndarray:
        return self.x_min + self.pixel_size * np.arange(self.x_resolution + 1)

    def y_edges(self) -> np.ndarray:
        return self.y_min + self.pixel_size * np.arange(self.y_resolution + 1)

    @cached_property
    def centers(self) -> np.ndarray:
        """(N, 2) pixel centers in flat pixel order."""
        px = self.pixel_size
        xs = self.x_min + px * (np.arange(self.x_resolution) + 0.5)
        ys = self.y_min + px * (np.arange(self.y_resolution) + 0.5)
        gx, gy = np.meshgrid(xs, ys)  # rows indexed by y
        out = np.column_stack([gx.ravel(), gy.ravel()])
        out.setflags(write=False)
        return out

    @property
    def blocks(self):
        return ((0, self),)

    @property
    def bounding_box(self):
        return (self.x_min, self.x_max, self.y_min, self.y_max)


@dataclass(frozen=True)
class CompositeGrid:
    """Concatenation of per-dimension grids, in ascending dimension order."""

    blocks: tuple  # ((dim, GridSpec), ...)

    def __post_init__(self):
        dims = [d for d, _ in self.blocks]
        if dims != sorted(dims) or len(set(dims)) != len(dims):
            raise ValueError("blocks must be in strictly ascending dimension order")

    @property
    def size(self) -> int:
        return sum(g.size for _, g in self.blocks)

    @cached_property
    def centers(self) -> np.ndarray:
        out = np.vstack([g.centers for _, g in self.blocks])
        out.setflags(write=False)
        return out

    @property
    def bounding_box(self):
        boxes = [g.bounding_box for _, g in self.blocks]
        return (
            min(b[0] for b in boxes),
            max(b[1] for b in boxes),
            min(b[2] for b in boxes),
            max(b[3] for b in boxes),
        )


def fit_grid(diagrams, y_resolution: int = 40, tau: float | None = None) -> GridSpec:
    """Bounding-box grid over the transformed points of all diagrams.

    The box is padded by 10% of each side length, at least ``3 * tau``
    when the Gaussian spread is known.  A degenerate box (single distinct
    point and no tau) falls back to a 0.5 pad so the grid has area.
    """
    pts = [transformed_points(d) for d in diagrams]
    pts = [p for p in pts if p.size]
    if not pts:
        raise ValueError("cannot fit a grid: all diagrams are empty")
    allpts = np.vstack(pts)
    x_min, y_min = allpts.min(axis=0)
    x_max, y_max = allpts.max(axis=0)
    min_pad = 3.0 * tau if tau else 0.0
    pad_x = max(0.1 * (x_max - x_min), min_pad)
    pad_y = max(0.1 * (y_max - y_min), min_pad)
    if pad_x == 0.0:
        pad_x = 0.5
    if pad_y == 0.0:
        pad_y = 0.5
    return GridSpec(
        x_min=float(x_min - pad_x),
        x_max=float(x_max + pad_x),
        y_min=float(y_min - pad_y),
        y_max=float(y_max + pad_y),
        y_resolution=y_resolution,
    )


def pl_weight(point, b: float) -> float:
    """Piecewise-linear surface weight ramping up with persistence.

    For a point (x, y): |y-x|/b when |y-x| < b and y > 0; |-y-x|/b when
    |-y-x| < b and y < 0; otherwise 1 (including y = 0, where the two
    ramps are undefined).
    """
    if b <= 0:
        raise ValueError("b must be positive")
    x, y = point
    if y > 0 and abs(y - x) < b:
        return abs(y - x) / b
    if y < 0 and abs(-y - x) < b:
        return abs(-y - x) / b
    return 1.0


def piecewise_linear_weight(b: float):
    """Surface-weight callable applying :func:`pl_weight` with a fixed ramp width."""
    if b <= 0:
        raise ValueError("b must be positive")
    return lambda x, y: pl_weight((x, y), b)


@dataclass(frozen=True)
class PiConfig:
    """Gaussian spread and surface weight used to rasterize diagrams.

    ``surface_weight`` is None for the constant-one weight or a callable
    (x, y) -> weight evaluated at each transformed point.
    """

    tau: float
    surface_weight: object | None = None

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.surface_weight is not None and not callable(self.surface_weight):
            raise ValueError("surface_weight must be callable or None")

    def weight_at(self, x: float, y: float) -> float:
        if self.surface_weight is None:
            return 1.0
        return float(self.surface_weight(x, y))


@dataclass(frozen=True, eq=False)
class PersistenceImage:
    """Pixel-integral vector of a diagram's persistence surface."""

    grid: object  # GridSpec or CompositeGrid
    pixels: np.ndarray

    def __post_init__(self):
        pix = np.asarray(self.pixels, dtype=float)
        if pix.shape != (self.grid.size,):
            raise ValueError("pixel vector length does not match the grid")
        pix.setflags(write=False)
        object.__setattr__(self, "pixels", pix)


def compute_persistence_image(
    diagram: PersistenceDiagram, grid: GridSpec, cfg: PiConfig
) -> PersistenceImage:
    """Exact pixel integrals of the weighted Gaussian surface of a diagram.

    Each diagram point contributes the product of 1-d Gaussian CDF
    differences over the pixel edges, scaled by its surface weight; points
    outside the grid still contribute their tails.
    """
    pixels = np.zeros(grid.size)
    pts = transformed_points(diagram)
    if pts.size:
        xe = grid.x_edges()
        ye = grid.y_edges()
        for x, y in pts:
            alpha = cfg.weight_at(x, y)
            if alpha == 0.0:
                continue
            cx = np.diff(ndtr((xe - x) / cfg.tau))
            cy = np.diff(ndtr((ye - y) / cfg.tau))
            pixels += alpha * np.outer(cy, cx).ravel()
    return PersistenceImage(grid, pixels)


def concatenate_images(per_dimension) -> PersistenceImage:
    """Concatenate per-dimension images into one vector, dimension 0 first.

    ``per_dimension`` maps homology dimension to an image on its own grid;
    a single-entry input is returned unchanged.
    """
    items = sorted(per_dimension.items())
    if not items:
        raise ValueError("nothing to concatenate")
    if len(items) == 1:
        return items[0][1]
    blocks = []
    for dim, img in items:
        if not isinstance(img.grid, GridSpec):
            raise ValueError("inputs must be single-grid images")
        blocks.append((dim, img.grid))
    grid = CompositeGrid(tuple(blocks))
    return PersistenceImage(grid, np.concatenate([img.pixels for _, img in items]))


def images_to_csv(images, path: str) -> None:
    """One row per image, full-precision pixel values."""
    with open(path, "w") as fh:
        for img in images:
            fh.write(",".join(repr(float(v)) for v in img.pixels))
            fh.write("\n")


_MAGIC = b"WKPI-PI1"


def write_image_container(images, path: str) -> None:
    """Binary container for images sharing one grid.

    Layout: magic ``WKPI-PI1``, little-endian u32 x_resolution, u32
    y_resolution, four f64 bounds (x_min, x_max, y_min, y_max), then N f64
    pixels per image.
    """
    if not images:
        raise ValueError("no images to write")
    grid = images[0].grid
    if not isinstance(grid, GridSpec):
        raise ValueError("the binary container stores single-grid images")
    if any(img.grid != grid for img in images):
        raise ValueError("all images must share one grid")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", grid.x_resolution, grid.y_resolution))
        fh.write(struct.pack("<4d", grid.x_min, grid.x_max, grid.y_min, grid.y_max))
        for img in images:
            fh.write(np.asarray(img.pixels, dtype="<f8").tobytes())


def read_image_container(path: str):
    """Read back a list of :class:`PersistenceImage` written by the container writer."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"bad magic in {path}: {magic!r}")
        x_res, y_res = struct.unpack("<II", fh.read(8))
        x_min, x_max, y_min, y_max = struct.unpack("<4d", fh.read(32))
        grid = GridSpec(x_min, x_max, y_min, y_max, y_resolution=y_res)
        if grid.x_resolution != x_res:
            raise ValueError(
                f"stored x_resolution {x_res} does not match bounds-derived {grid.x_resolution}"
            )
        payload = fh.read()
    n = grid.size
    if len(payload) % (8 * n) != 0:
        raise ValueError("truncated image container")
    images = []
    for ofs in range(0, len(payload), 8 * n):
        pixels = np.frombuffer(payload[ofs : ofs + 8 * n], dtype="<f8").copy()
        images.append(PersistenceImage(grid, pixels))
    return images
