"""Grayscale rasters, block geometry, the 8 square isometries, and PGM I/O.

Everything here is deterministic and bit-exact by construction: fractional
intensities round half away from zero and are clamped to [0, 255], so two
runs (or two backends) produce identical pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

__all__ = [
    "FormatError",
    "GrayImage",
    "Block",
    "Isometry",
    "round_half_away",
    "apply_isometry",
    "apply_isometry_pixels",
    "isometry_source_indices",
    "compose",
    "inverse",
    "resize",
    "resize_to_256",
    "downsample_2x",
    "downsample_pixels_2x",
    "extract_range_blocks",
    "extract_domain_blocks",
    "domain_grid_shape",
    "read_pgm",
    "write_pgm",
    "psnr",
]


class FormatError(ValueError):
    """Malformed or unsupported file content (bad magic, truncated raster...)."""


def round_half_away(x):
    """Round to the nearest integer, halves away from zero.

    Works on scalars and arrays; returns float64 values that are exact
    integers. This is the single rounding rule used everywhere in the
    package (resampling, downsampling, decoding).
    """
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _to_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(round_half_away(x), 0.0, 255.0).astype(np.uint8)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _validate_intensities(a: np.ndarray, what: str) -> np.ndarray:
    if a.dtype == np.uint8:
        return a
    if not np.issubdtype(a.dtype, np.integer):
        raise ValueError(f"{what} must hold integers in [0, 255], got dtype {a.dtype}")
    if a.size and (a.min() < 0 or a.max() > 255):
        raise ValueError(f"{what} values must lie in [0, 255]")
    return a.astype(np.uint8)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit single-channel raster. Pixels are (height, width), read-only."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("pixels must be a non-empty 2-D array")
        px = _validate_intensities(px, "pixels")
        object.__setattr__(self, "pixels", _freeze(px.copy()))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def full(cls, height: int, width: int, value: int) -> "GrayImage":
        return cls(np.full((height, width), value, dtype=np.uint8))


@dataclass(frozen=True, eq=False)
class Block:
    """Square tile of intensities plus its (row, col) origin in the source."""

    origin: tuple[int, int]
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
            raise ValueError("block data must be square and non-empty")
        d = _validate_intensities(d, "block data")
        object.__setattr__(self, "origin", (int(self.origin[0]), int(self.origin[1])))
        object.__setattr__(self, "data", _freeze(d.copy()))

    @property
    def size(self) -> int:
        return self.data.shape[0]


class Isometry(IntEnum):
    """The 8 symmetries of the square (dihedral group).

    ROT90 is clockwise: pixel (r, c) maps to (c, N-1-r).
    """

    IDENTITY = 0
    ROT90 = 1
    ROT180 = 2
    ROT270 = 3
    FLIP_H = 4          # mirror across the central vertical axis
    FLIP_V = 5          # mirror across the central horizontal axis
    FLIP_MAIN_DIAG = 6
    FLIP_ANTI_DIAG = 7


def apply_isometry_pixels(a: np.ndarray, t: Isometry) -> np.ndarray:
    """Apply isometry `t` to a square 2-D array and return a new array."""
    t = Isometry(t)
    if t is Isometry.IDENTITY:
        return a.copy()
    if t is Isometry.ROT90:
        return np.rot90(a, k=-1).copy()
    if t is Isometry.ROT180:
        return np.rot90(a, k=2).copy()
    if t is Isometry.ROT270:
        return np.rot90(a, k=1).copy()
    if t is Isometry.FLIP_H:
        return np.fliplr(a).copy()
    if t is Isometry.FLIP_V:
        return np.flipud(a).copy()
    if t is Isometry.FLIP_MAIN_DIAG:
        return a.T.copy()
    return a[::-1, ::-1].T.copy()  # FLIP_ANTI_DIAG


def apply_isometry(b: Block, t: Isometry) -> Block:
    """Permute a block's pixels by one of the 8 square symmetries."""
    return Block(b.origin, apply_isometry_pixels(b.data, t))


def isometry_source_indices(n: int) -> np.ndarray:
    """(8, n*n) lookup: out.flat[i] = in.flat[lut[t, i]] applies isometry t.

    Shared by the numba and numpy decode paths so both permute identically.
    """
    probe = np.arange(n * n, dtype=np.int64).reshape(n, n)
    return np.stack(
        [apply_isometry_pixels(probe, Isometry(t)).ravel() for t in range(8)]
    )


def _build_group_tables() -> tuple[np.ndarray, np.ndarray]:
    probe = np.arange(16, dtype=np.int64).reshape(4, 4)
    images = [apply_isometry_pixels(probe, Isometry(t)) for t in range(8)]
    comp = np.zeros((8, 8), dtype=np.int64)
    for a in range(8):
        for b in range(8):
            combined = apply_isometry_pixels(images[a], Isometry(b))
            matches = [t for t in range(8) if np.array_equal(images[t], combined)]
            comp[a, b] = matches[0]
    inv = np.zeros(8, dtype=np.int64)
    for a in range(8):
        inv[a] = int(np.nonzero(comp[a] == 0)[0][0])
    return comp, inv


_COMPOSE, _INVERSE = _build_group_tables()


def compose(first: Isometry, second: Isometry) -> Isometry:
    """Isometry equivalent to applying `first`, then `second`."""
    return Isometry(int(_COMPOSE[int(first), int(second)]))


def inverse(t: Isometry) -> Isometry:
    return Isometry(int(_INVERSE[int(t)]))


def resize(img: GrayImage, width: int, height: int) -> GrayImage:
    """Bilinear resample with corner-aligned sampling.

    Source coordinate of output index i is i*(src-1)/(dst-1) (0 when dst=1),
    so corner pixels reproduce source corners exactly and a same-size resize
    is the identity.
    """
    if width < 1 or height < 1:
        raise ValueError("target dimensions must be positive")
    src = img.pixels.astype(np.float64)
    h, w = src.shape
    ys = np.arange(height, dtype=np.float64) * ((h - 1) / (height - 1)) if height > 1 else np.zeros(height)
    xs = np.arange(width, dtype=np.float64) * ((w - 1) / (width - 1)) if width > 1 else np.zeros(width)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1.0 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1.0 - fx) + src[np.ix_(y1, x1)] * fx
    out = top * (1.0 - fy) + bot * fy
    return GrayImage(_to_u8(out))


def resize_to_256(img: GrayImage) -> GrayImage:
    return resize(img, 256, 256)


def downsample_pixels_2x(a: np.ndarray) -> np.ndarray:
    """2:1 contraction of an even-sided array: each output pixel is the
    rounded average of its 2x2 source quad. Returns exact-integer float64."""
    n = a.shape[0]
    if n % 2 or a.shape[1] % 2:
        raise ValueError("side length must be even for 2x downsampling")
    q = a.astype(np.float64).reshape(n // 2, 2, a.shape[1] // 2, 2).sum(axis=(1, 3))
    return round_half_away(q * 0.25)


def downsample_2x(b: Block) -> Block:
    """Halve a block by averaging each 2x2 quad (round half away from zero)."""
    return Block(b.origin, downsample_pixels_2x(b.data).astype(np.uint8))


def extract_range_blocks(img: GrayImage, n: int) -> list[Block]:
    """Non-overlapping n-by-n tiling of the image, row-major."""
    if n < 1:
        raise ValueError("block size must be positive")
    if img.height % n or img.width % n:
        raise ValueError(
            f"image {img.width}x{img.height} is not divisible into {n}x{n} tiles"
        )
    px = img.pixels
    return [
        Block((r, c), px[r : r + n, c : c + n])
        for r in range(0, img.height, n)
        for c in range(0, img.width, n)
    ]


def domain_grid_shape(height: int, width: int, n: int, stride: int) -> tuple[int, int]:
    """(rows, cols) of the 2n-by-2n domain pool at the given stride."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    side = 2 * n
    if side > height or side > width:
        raise ValueError(f"domain side {side} exceeds image {width}x{height}")
    return (height - side) // stride + 1, (width - side) // stride + 1


def extract_domain_blocks(img: GrayImage, n: int, stride: int) -> list[Block]:
    """All 2n-by-2n blocks at origins (i*stride, j*stride), row-major."""
    rows, cols = domain_grid_shape(img.height, img.width, n, stride)
    px = img.pixels
    side = 2 * n
    return [
        Block((i * stride, j * stride), px[i * stride : i * stride + side, j * stride : j * stride + side])
        for i in range(rows)
        for j in range(cols)
    ]


def read_pgm(path) -> GrayImage:
    """Read a binary PGM (P5, maxval 255). Raster bytes are preserved exactly."""
    data = Path(path).read_bytes()
    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data):
            c = data[pos : pos + 1]
            if c == b"#":
                nl = data.find(b"\n", pos)
                pos = len(data) if nl < 0 else nl + 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        return data[start:pos]

    magic = next_token()
    if magic != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {magic!r})")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise FormatError(f"{path}: raster truncated ({len(raster)} of {width * height} bytes)")
    return GrayImage(np.frombuffer(raster, dtype=np.uint8).reshape(height, width))


def write_pgm(img: GrayImage, path) -> None:
    """Write a binary PGM with a canonical header; round-trips bit-exactly."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.pixels.tobytes())


def psnr(a: GrayImage, b: GrayImage) -> float:
    """Peak signal-to-noise ratio in dB between two equal-size images."""
    if a.pixels.shape != b.pixels.shape:
        raise ValueError("images must have identical dimensions")
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 * 255.0 / mse)
