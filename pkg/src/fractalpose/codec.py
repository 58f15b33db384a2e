"""Fractal block codec: exhaustive encoder and iterative fixed-point decoder.

Encoding approximates every non-overlapping ``N x N`` range tile by an
affine map of a contracted ``2N x 2N`` domain block: pick a domain, one of
the 8 square isometries, a contrast factor ``s`` (|s| < 1, so the decoder
iteration contracts) and a brightness offset ``o``. Contrast and offset are
stored on uniform midrise quantization lattices, and the search scores each
candidate with the dequantized values so the stored code reproduces the
scored error. Decoding iterates the stored maps from an arbitrary start
image, by default flat gray 128.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .image import (
    Block,
    FormatError,
    GrayImage,
    Isometry,
    domain_grid_shape,
    isometry_source_indices,
    round_half_away,
)

__all__ = [
    "O_LO",
    "O_HI",
    "EncoderConfig",
    "EncodeStats",
    "FractalCodeEntry",
    "FractalCode",
    "quantize_s",
    "dequantize_s",
    "quantize_o",
    "dequantize_o",
    "fit_contrast_offset",
    "block_distortion",
    "encode",
    "encode_with_stats",
    "decode",
    "code_to_bytes",
    "code_from_bytes",
    "save_code",
    "load_code",
]

O_LO = -255.0
O_HI = 255.0

_CODE_MAGIC = b"HPIF"
_CODE_VERSION = 1
_CODE_HEADER = struct.Struct("<4sBHHIBBIIHH")
_CODE_ENTRY = struct.Struct("<IBBB")


@dataclass(frozen=True)
class EncoderConfig:
    """Search and quantization parameters of the codec.

    ``domain_stride`` defaults to ``range_size``; ``decode_iterations`` only
    affects decoding and is excluded from the fingerprint that guards vector
    comparability.
    """

    range_size: int = 8
    domain_stride: int | None = None
    s_max: float = 0.99
    s_bits: int = 5
    o_bits: int = 7
    decode_iterations: int = 10

    def __post_init__(self):
        if self.domain_stride is None:
            object.__setattr__(self, "domain_stride", self.range_size)
        if self.range_size < 2 or self.range_size % 2:
            raise ValueError("range_size must be even and >= 2")
        if self.domain_stride < 1:
            raise ValueError("domain_stride must be >= 1")
        if not 0.0 < self.s_max <= 1.0:
            raise ValueError("s_max must lie in (0, 1]")
        if not 1 <= self.s_bits <= 8 or not 1 <= self.o_bits <= 8:
            raise ValueError("s_bits and o_bits must lie in [1, 8]")
        if self.decode_iterations < 0:
            raise ValueError("decode_iterations must be >= 0")

    def packed_fields(self) -> tuple[int, int, int, int, int]:
        return (
            self.range_size,
            self.domain_stride,
            int(round(self.s_max * 10000.0)),
            self.s_bits,
            self.o_bits,
        )

    def fingerprint(self) -> int:
        blob = struct.pack("<HHIBB", *self.packed_fields())
        return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


@dataclass(frozen=True)
class EncodeStats:
    domain_count: int
    candidate_count: int
    mean_distortion: float


@dataclass(frozen=True)
class FractalCodeEntry:
    """Transform record for one range tile."""

    domain_index: int
    isometry: Isometry
    s_q: int
    o_q: int


@dataclass(frozen=True)
class FractalCode:
    config: EncoderConfig
    image_w: int
    image_h: int
    grid_w: int
    grid_h: int
    entries: tuple[FractalCodeEntry, ...]

    def __post_init__(self):
        n = self.config.range_size
        if self.image_w % n or self.image_h % n:
            raise ValueError("image dimensions must be divisible by range_size")
        if self.grid_w != self.image_w // n or self.grid_h != self.image_h // n:
            raise ValueError("grid dimensions inconsistent with image size")
        if len(self.entries) != self.grid_w * self.grid_h:
            raise ValueError("entry count must equal grid_w * grid_h")

    @property
    def domain_grid(self) -> tuple[int, int]:
        return domain_grid_shape(
            self.image_h, self.image_w, self.config.range_size, self.config.domain_stride
        )

    @property
    def domain_count(self) -> int:
        rows, cols = self.domain_grid
        return rows * cols


# ---------------------------------------------------------------------------
# quantization (uniform midrise over a symmetric interval)


def _quantize(value: float, lo: float, span: float, bits: int) -> int:
    levels = 1 << bits
    step = span / levels
    v = min(max(value, lo), lo + span)
    q = int(math.floor((v - lo) / step))
    return min(max(q, 0), levels - 1)


def _dequantize(level: int, lo: float, span: float, bits: int) -> float:
    levels = 1 << bits
    if not 0 <= level < levels:
        raise ValueError(f"level {level} out of range for {bits} bits")
    return lo + (level + 0.5) * (span / levels)


def quantize_s(s: float, cfg: EncoderConfig) -> int:
    """Contrast level over [-s_max, s_max]; out-of-range input is clamped."""
    return _quantize(s, -cfg.s_max, 2.0 * cfg.s_max, cfg.s_bits)


def dequantize_s(level: int, cfg: EncoderConfig) -> float:
    return _dequantize(level, -cfg.s_max, 2.0 * cfg.s_max, cfg.s_bits)


def quantize_o(o: float, cfg: EncoderConfig) -> int:
    """Offset level over [-255, 255]; out-of-range input is clamped."""
    return _quantize(o, O_LO, O_HI - O_LO, cfg.o_bits)


def dequantize_o(level: int, cfg: EncoderConfig) -> float:
    return _dequantize(level, O_LO, O_HI - O_LO, cfg.o_bits)


# ---------------------------------------------------------------------------
# per-block fitting


def _as_flat_pair(range_block: Block, domain_contracted: Block) -> tuple[np.ndarray, np.ndarray]:
    if range_block.size != domain_contracted.size:
        raise ValueError(
            f"block sizes differ: {range_block.size} vs {domain_contracted.size}"
        )
    r = range_block.data.astype(np.float64).ravel()
    d = domain_contracted.data.astype(np.float64).ravel()
    return r, d


def fit_contrast_offset(
    range_block: Block, domain_contracted: Block, s_max: float
) -> tuple[float, float]:
    """Least-squares contrast and offset mapping the contracted domain onto
    the range: s = cov(D, R)/var(D) clamped to [-s_max, s_max] (0 when the
    domain is constant), then o = mean(R) - s*mean(D) with the clamped s."""
    r, d = _as_flat_pair(range_block, domain_contracted)
    n = r.size
    sr = float(r.sum())
    sd = float(d.sum())
    cov_n = n * float(d @ r) - sd * sr
    var_n = n * float(d @ d) - sd * sd
    if var_n == 0.0:
        s = 0.0
    else:
        s = cov_n / var_n
        s = min(max(s, -s_max), s_max)
    o = (sr - s * sd) / n
    return s, o


def block_distortion(
    range_block: Block, domain_contracted: Block, s: float, o: float
) -> float:
    """Sum of squared differences between the range and s*D + o."""
    r, d = _as_flat_pair(range_block, domain_contracted)
    diff = r - (s * d + o)
    return float(diff @ diff)


# ---------------------------------------------------------------------------
# encode


def _range_matrix(px: np.ndarray, n: int) -> np.ndarray:
    gh, gw = px.shape[0] // n, px.shape[1] // n
    tiles = px.reshape(gh, n, gw, n).transpose(0, 2, 1, 3)
    return tiles.reshape(gh * gw, n * n).astype(np.float64)


def _candidate_pool(px: np.ndarray, n: int, stride: int) -> np.ndarray:
    """(domains*8, n*n) matrix of contracted, isometry-expanded domain blocks.
    Candidate index is domain_index*8 + isometry id."""
    side = 2 * n
    win = np.lib.stride_tricks.sliding_window_view(px, (side, side))[::stride, ::stride]
    dom = win.reshape(-1, side, side).astype(np.float64)
    quad = dom.reshape(-1, n, 2, n, 2).sum(axis=(2, 4)) * 0.25
    contracted = round_half_away(quad).reshape(-1, n * n)
    lut = isometry_source_indices(n)
    pool = np.empty((contracted.shape[0] * 8, n * n), dtype=np.float64)
    for t in range(8):
        pool[t::8] = contracted[:, lut[t]]
    return pool


def encode_with_stats(
    img: GrayImage, cfg: EncoderConfig | None = None, backend: str | None = None
) -> tuple[FractalCode, EncodeStats]:
    cfg = cfg or EncoderConfig()
    n = cfg.range_size
    if img.height % n or img.width % n:
        raise ValueError(
            f"image {img.width}x{img.height} is not divisible by range_size {n}"
        )
    rows, cols = domain_grid_shape(img.height, img.width, n, cfg.domain_stride)
    px = img.pixels
    ranges = _range_matrix(px, n)
    pool = _candidate_pool(px, n, cfg.domain_stride)
    s_levels = np.array(
        [dequantize_s(k, cfg) for k in range(1 << cfg.s_bits)], dtype=np.float64
    )
    o_step = (O_HI - O_LO) / (1 << cfg.o_bits)
    cand, s_q, o_q, err = kernels.encode_search(
        ranges, pool, s_levels, O_LO, o_step, 1 << cfg.o_bits, backend=backend
    )
    entries = tuple(
        FractalCodeEntry(int(c) // 8, Isometry(int(c) % 8), int(k), int(q))
        for c, k, q in zip(cand, s_q, o_q)
    )
    code = FractalCode(
        config=cfg,
        image_w=img.width,
        image_h=img.height,
        grid_w=img.width // n,
        grid_h=img.height // n,
        entries=entries,
    )
    stats = EncodeStats(
        domain_count=rows * cols,
        candidate_count=pool.shape[0],
        mean_distortion=float(err.mean()),
    )
    return code, stats


def encode(
    img: GrayImage, cfg: EncoderConfig | None = None, backend: str | None = None
) -> FractalCode:
    return encode_with_stats(img, cfg, backend=backend)[0]


# ---------------------------------------------------------------------------
# decode


def decode(
    code: FractalCode,
    initial: GrayImage | None = None,
    iterations: int | None = None,
    backend: str | None = None,
) -> GrayImage:
    """Iterate the stored mapping from `initial` (flat gray 128 by default)."""
    iters = code.config.decode_iterations if iterations is None else iterations
    if iters < 0:
        raise ValueError("iterations must be >= 0")
    if initial is None:
        cur = np.full((code.image_h, code.image_w), 128, dtype=np.int64)
    else:
        if initial.width != code.image_w or initial.height != code.image_h:
            raise ValueError(
                f"initial image {initial.width}x{initial.height} does not match "
                f"code dimensions {code.image_w}x{code.image_h}"
            )
        cur = initial.pixels.astype(np.int64)

    cfg = code.config
    n = cfg.range_size
    _, dcols = code.domain_grid
    n_entries = len(code.entries)
    dom_r = np.empty(n_entries, dtype=np.int64)
    dom_c = np.empty(n_entries, dtype=np.int64)
    iso = np.empty(n_entries, dtype=np.int64)
    s_hat = np.empty(n_entries, dtype=np.float64)
    o_hat = np.empty(n_entries, dtype=np.float64)
    for i, e in enumerate(code.entries):
        dom_r[i] = (e.domain_index // dcols) * cfg.domain_stride
        dom_c[i] = (e.domain_index % dcols) * cfg.domain_stride
        iso[i] = int(e.isometry)
        s_hat[i] = dequantize_s(e.s_q, cfg)
        o_hat[i] = dequantize_o(e.o_q, cfg)
    lut = isometry_source_indices(n)

    for _ in range(iters):
        cur = kernels.decode_pass(
            cur, dom_r, dom_c, iso, s_hat, o_hat, lut, n, code.grid_w, backend=backend
        )
    return GrayImage(cur.astype(np.uint8))


# ---------------------------------------------------------------------------
# binary format


def code_to_bytes(code: FractalCode) -> bytes:
    cfg = code.config
    head = _CODE_HEADER.pack(
        _CODE_MAGIC,
        _CODE_VERSION,
        *cfg.packed_fields(),
        code.image_w,
        code.image_h,
        code.grid_w,
        code.grid_h,
    )
    parts = [head]
    for e in code.entries:
        parts.append(_CODE_ENTRY.pack(e.domain_index, int(e.isometry), e.s_q, e.o_q))
    return b"".join(parts)


def code_from_bytes(data: bytes) -> FractalCode:
    if len(data) < _CODE_HEADER.size:
        raise FormatError("fractal code: truncated header")
    magic, version, n, stride, s_max_fp, s_bits, o_bits, iw, ih, gw, gh = (
        _CODE_HEADER.unpack_from(data, 0)
    )
    if magic != _CODE_MAGIC:
        raise FormatError(f"fractal code: bad magic {magic!r}")
    if version != _CODE_VERSION:
        raise FormatError(f"fractal code: unsupported version {version}")
    try:
        cfg = EncoderConfig(
            range_size=n,
            domain_stride=stride,
            s_max=s_max_fp / 10000.0,
            s_bits=s_bits,
            o_bits=o_bits,
        )
    except ValueError as exc:
        raise FormatError(f"fractal code: invalid config ({exc})") from exc
    n_entries = gw * gh
    expected = _CODE_HEADER.size + n_entries * _CODE_ENTRY.size
    if len(data) != expected:
        raise FormatError(
            f"fractal code: expected {expected} bytes, got {len(data)}"
        )
    try:
        pool_rows, pool_cols = domain_grid_shape(ih, iw, n, stride)
    except ValueError as exc:
        raise FormatError(f"fractal code: invalid geometry ({exc})") from exc
    pool_size = pool_rows * pool_cols
    entries = []
    off = _CODE_HEADER.size
    for _ in range(n_entries):
        dom, iso, s_q, o_q = _CODE_ENTRY.unpack_from(data, off)
        off += _CODE_ENTRY.size
        if dom >= pool_size or iso >= 8 or s_q >= (1 << s_bits) or o_q >= (1 << o_bits):
            raise FormatError("fractal code: entry field out of range")
        entries.append(FractalCodeEntry(dom, Isometry(iso), s_q, o_q))
    try:
        return FractalCode(cfg, iw, ih, gw, gh, tuple(entries))
    except ValueError as exc:
        raise FormatError(f"fractal code: inconsistent header ({exc})") from exc


def save_code(code: FractalCode, path) -> None:
    Path(path).write_bytes(code_to_bytes(code))


def load_code(path) -> FractalCode:
    return code_from_bytes(Path(path).read_bytes())
