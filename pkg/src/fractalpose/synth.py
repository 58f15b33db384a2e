"""Deterministic synthetic imagery for tests and benchmarks.

Provides a smooth procedural "natural" raster (bundled as package data), a
higher-contrast planar texture, and a pinhole renderer that images that
texture under out-of-plane rotations. Rendering is perspective, not
orthographic, so opposite rotation signs produce distinct images.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .gallery import Manifest, ManifestRow, PoseLabel, save_manifest
from .image import GrayImage, read_pgm, round_half_away, write_pgm

__all__ = [
    "smooth_field",
    "natural_image",
    "texture_pattern",
    "render_plane",
    "pose_grid",
    "write_benchmark_dataset",
    "sample_image_path",
    "load_sample_image",
]

_DATA_DIR = Path(__file__).parent / "data"


def _upsample_bilinear(a: np.ndarray, h: int, w: int) -> np.ndarray:
    ys = np.linspace(0.0, a.shape[0] - 1, h)
    xs = np.linspace(0.0, a.shape[1] - 1, w)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, a.shape[0] - 1)
    x1 = np.minimum(x0 + 1, a.shape[1] - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = a[np.ix_(y0, x0)] * (1 - fx) + a[np.ix_(y0, x1)] * fx
    bot = a[np.ix_(y1, x0)] * (1 - fx) + a[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def smooth_field(size: int, seed: int, octaves: int = 5, persistence: float = 0.5) -> np.ndarray:
    """Multi-octave value noise in [0, 1], smooth at low octaves."""
    rng = np.random.default_rng(seed)
    acc = np.zeros((size, size))
    amp = 1.0
    total = 0.0
    for k in range(octaves):
        grid = 2 ** (k + 2)
        coarse = rng.random((grid, grid))
        acc += amp * _upsample_bilinear(coarse, size, size)
        total += amp
        amp *= persistence
    acc /= total
    lo, hi = acc.min(), acc.max()
    return (acc - lo) / (hi - lo) if hi > lo else acc


def _to_gray(field: np.ndarray, lo: float = 8.0, hi: float = 247.0) -> GrayImage:
    fmin, fmax = field.min(), field.max()
    norm = (field - fmin) / (fmax - fmin) if fmax > fmin else np.zeros_like(field)
    return GrayImage(np.clip(round_half_away(lo + norm * (hi - lo)), 0, 255).astype(np.uint8))


def natural_image(size: int = 256, seed: int = 20) -> GrayImage:
    """Photo-like content: octave noise with fine detail, a soft vignette,
    a few blobs and mild grain."""
    rng = np.random.default_rng(seed + 1)
    f = smooth_field(size, seed, octaves=7, persistence=0.65)
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    vignette = np.exp(-2.0 * ((yy - 0.45) ** 2 + (xx - 0.5) ** 2))
    field = 0.58 * f + 0.30 * vignette
    for _ in range(4):
        cy, cx = rng.uniform(0.2, 0.8, 2)
        sg = rng.uniform(0.08, 0.2)
        field += rng.choice([-1.0, 1.0]) * 0.12 * np.exp(
            -((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sg * sg)
        )
    field += 0.01 * rng.standard_normal((size, size))
    return _to_gray(field)


def texture_pattern(size: int = 256, seed: int = 11) -> GrayImage:
    """Asymmetric high-contrast pattern for the planar pose benchmark."""
    rng = np.random.default_rng(seed)
    f = smooth_field(size, int(rng.integers(2**31)), octaves=6, persistence=0.58)
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    field = 0.50 * f
    for _ in range(7):
        cy, cx = rng.uniform(0.12, 0.88, 2)
        sg = rng.uniform(0.04, 0.14)
        field += rng.choice([-1.0, 1.0]) * 0.33 * np.exp(
            -((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sg * sg)
        )
    rad = np.sqrt((yy - 0.42) ** 2 + (xx - 0.55) ** 2)
    field += 0.16 * np.sin(rad * 34.0 + 0.8)
    return _to_gray(field, lo=4.0, hi=251.0)


def _rotation(pitch: float, yaw: float, roll: float) -> np.ndarray:
    p, y, r = np.radians([pitch, yaw, roll])
    rx = np.array([[1, 0, 0], [0, np.cos(p), -np.sin(p)], [0, np.sin(p), np.cos(p)]])
    ry = np.array([[np.cos(y), 0, np.sin(y)], [0, 1, 0], [-np.sin(y), 0, np.cos(y)]])
    rz = np.array([[np.cos(r), -np.sin(r), 0], [np.sin(r), np.cos(r), 0], [0, 0, 1]])
    return rx @ ry @ rz


def render_plane(
    texture: GrayImage,
    pitch: float,
    yaw: float,
    roll: float,
    size: int = 256,
    focal: float = 300.0,
    distance: float = 3.0,
    plane_half: float = 1.0,
) -> GrayImage:
    """Image of a textured plane rotated by (pitch, yaw, roll) degrees and
    viewed by a pinhole camera; pixels off the plane are black."""
    rot = _rotation(pitch, yaw, roll)
    c = (size - 1) / 2.0
    k = np.array([[focal, 0.0, c], [0.0, focal, c], [0.0, 0.0, 1.0]])
    h = k @ np.column_stack([rot[:, 0], rot[:, 1], [0.0, 0.0, distance]])
    hinv = np.linalg.inv(h)

    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    pts = np.stack([xs.ravel(), ys.ravel(), np.ones(size * size)])
    uvw = hinv @ pts
    w = uvw[2]
    safe = np.where(np.abs(w) > 1e-12, w, 1.0)
    u = uvw[0] / safe
    v = uvw[1] / safe

    tw, th = texture.width, texture.height
    tx = (u / plane_half * 0.5 + 0.5) * (tw - 1)
    ty = (v / plane_half * 0.5 + 0.5) * (th - 1)
    inside = (
        (np.abs(w) > 1e-12)
        & (tx >= 0.0) & (tx <= tw - 1)
        & (ty >= 0.0) & (ty <= th - 1)
    )
    tx = np.clip(tx, 0.0, tw - 1)
    ty = np.clip(ty, 0.0, th - 1)
    x0 = np.floor(tx).astype(np.int64)
    y0 = np.floor(ty).astype(np.int64)
    x1 = np.minimum(x0 + 1, tw - 1)
    y1 = np.minimum(y0 + 1, th - 1)
    fx = tx - x0
    fy = ty - y0
    src = texture.pixels.astype(np.float64)
    val = (
        src[y0, x0] * (1 - fx) * (1 - fy)
        + src[y0, x1] * fx * (1 - fy)
        + src[y1, x0] * (1 - fx) * fy
        + src[y1, x1] * fx * fy
    )
    out = np.where(inside, val, 0.0).reshape(size, size)
    return GrayImage(np.clip(round_half_away(out), 0, 255).astype(np.uint8))


def pose_grid(
    step: float = 5.0,
    pitch_span: float = 30.0,
    yaw_span: float = 30.0,
    roll_span: float = 20.0,
) -> list[PoseLabel]:
    """Lattice poses covering the box, restricted to the three axis-aligned
    planes (at most two nonzero angles per pose); deduplicated, fixed order."""

    def vals(span: float) -> list[float]:
        k = int(round(span / step))
        return [i * step for i in range(-k, k + 1)]

    poses: dict[tuple[float, float, float], None] = {}
    for p in vals(pitch_span):
        for y in vals(yaw_span):
            poses[(p, y, 0.0)] = None
    for p in vals(pitch_span):
        for r in vals(roll_span):
            poses[(p, 0.0, r)] = None
    for y in vals(yaw_span):
        for r in vals(roll_span):
            poses[(0.0, y, r)] = None
    return [PoseLabel(p, y, r) for (p, y, r) in poses]


def write_benchmark_dataset(
    out_dir,
    texture_seed: int = 11,
    step: float = 5.0,
    size: int = 256,
) -> Path:
    """Render the pose grid of a single texture into out_dir and write the
    matching manifest.csv; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tex = texture_pattern(size, texture_seed)
    rows = []
    for i, pose in enumerate(pose_grid(step=step)):
        name = f"pose_{i:04d}.pgm"
        write_pgm(render_plane(tex, pose.pitch, pose.yaw, pose.roll, size=size), out_dir / name)
        rows.append(ManifestRow(name, pose.pitch, pose.yaw, pose.roll, None))
    manifest = Manifest(tuple(rows), base_dir=out_dir)
    path = out_dir / "manifest.csv"
    save_manifest(manifest, path)
    return path


def sample_image_path() -> Path:
    """Path of the bundled 256x256 grayscale test image."""
    return _DATA_DIR / "sample256.pgm"


def load_sample_image() -> GrayImage:
    return read_pgm(sample_image_path())
