"""Labeled galleries of code vectors and nearest-neighbor pose lookup.

A gallery is built from a manifest CSV (``path,pitch,yaw,roll,subject``):
every image is loaded, resized to 256x256, fractal-encoded and vectorized.
Queries encode the probe the same way and return the label of the entry at
minimum Hamming distance, ties broken by the lowest entry index.
"""

from __future__ import annotations

import csv
import hashlib
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .codec import EncoderConfig, encode
from .image import FormatError, GrayImage, read_pgm, resize_to_256
from .vectors import CodeVector, hamming, vectorize

__all__ = [
    "EmptyGalleryError",
    "GalleryBuildError",
    "PoseLabel",
    "ManifestRow",
    "Manifest",
    "GalleryEntry",
    "Gallery",
    "load_manifest",
    "save_manifest",
    "split_leave_one_subject_out",
    "split_random",
    "encode_image_to_vector",
    "build_gallery",
    "query",
    "gallery_to_bytes",
    "gallery_from_bytes",
    "save_gallery",
    "load_gallery",
]

MANIFEST_COLUMNS = ("path", "pitch", "yaw", "roll", "subject")

_GALLERY_MAGIC = b"HPGL"
_GALLERY_VERSION = 1
_GALLERY_HEADER = struct.Struct("<4sBHHIBBI")


class EmptyGalleryError(ValueError):
    pass


class GalleryBuildError(ValueError):
    pass


@dataclass(frozen=True)
class PoseLabel:
    """Head orientation in degrees."""

    pitch: float
    yaw: float
    roll: float

    def __post_init__(self):
        for name in ("pitch", "yaw", "roll"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or abs(v) > 180.0:
                raise ValueError(f"{name} must be finite and within [-180, 180], got {v}")
            object.__setattr__(self, name, v)

    def axis(self, name: str) -> float:
        if name not in ("pitch", "yaw", "roll"):
            raise ValueError(f"unknown axis {name!r}")
        return getattr(self, name)


@dataclass(frozen=True)
class ManifestRow:
    path: str
    pitch: float
    yaw: float
    roll: float
    subject: str | None = None

    @property
    def label(self) -> PoseLabel:
        return PoseLabel(self.pitch, self.yaw, self.roll)


@dataclass(frozen=True)
class Manifest:
    rows: tuple[ManifestRow, ...]
    base_dir: Path | None = None

    def __post_init__(self):
        paths = [r.path for r in self.rows]
        if len(set(paths)) != len(paths):
            dupes = sorted({p for p in paths if paths.count(p) > 1})
            raise ValueError(f"manifest paths must be unique; duplicated: {dupes[:3]}")
        object.__setattr__(self, "rows", tuple(self.rows))

    def __len__(self) -> int:
        return len(self.rows)

    def resolve(self, row: ManifestRow) -> Path:
        p = Path(row.path)
        if p.is_absolute() or self.base_dir is None:
            return p
        return self.base_dir / p

    def subjects(self) -> list[str]:
        """Distinct subject ids in order of first appearance."""
        seen: dict[str, None] = {}
        for r in self.rows:
            if r.subject is not None and r.subject not in seen:
                seen[r.subject] = None
        return list(seen)


def load_manifest(path) -> Manifest:
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        got = tuple(reader.fieldnames or ())
        if got != MANIFEST_COLUMNS:
            raise ValueError(
                f"{path}: manifest header must be {','.join(MANIFEST_COLUMNS)}, got {','.join(got)}"
            )
        for lineno, rec in enumerate(reader, start=2):
            try:
                angles = {k: float(rec[k]) for k in ("pitch", "yaw", "roll")}
                PoseLabel(**angles)  # range/finiteness check
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad row ({exc})") from exc
            subject = (rec.get("subject") or "").strip()
            rows.append(
                ManifestRow(
                    path=rec["path"],
                    subject=subject or None,
                    **angles,
                )
            )
    return Manifest(tuple(rows), base_dir=path.parent)


def save_manifest(manifest: Manifest, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for r in manifest.rows:
            writer.writerow([r.path, repr(r.pitch), repr(r.yaw), repr(r.roll), r.subject or ""])


def split_leave_one_subject_out(manifest: Manifest, subject: str) -> tuple[Manifest, Manifest]:
    """(model, test): the named subject's rows form the test set."""
    test = [r for r in manifest.rows if r.subject == subject]
    if not test:
        raise ValueError(f"subject {subject!r} has no rows in the manifest")
    model = [r for r in manifest.rows if r.subject != subject]
    return (
        Manifest(tuple(model), manifest.base_dir),
        Manifest(tuple(test), manifest.base_dir),
    )


def split_random(manifest: Manifest, model_fraction: float, seed: int) -> tuple[Manifest, Manifest]:
    """Seeded shuffle, then split at ceil(fraction * n)."""
    if not 0.0 < model_fraction < 1.0:
        raise ValueError("model_fraction must lie strictly between 0 and 1")
    n = len(manifest)
    perm = np.random.default_rng(seed).permutation(n)
    k = math.ceil(model_fraction * n)
    model = tuple(manifest.rows[int(i)] for i in perm[:k])
    test = tuple(manifest.rows[int(i)] for i in perm[k:])
    return Manifest(model, manifest.base_dir), Manifest(test, manifest.base_dir)


@dataclass(frozen=True)
class GalleryEntry:
    vector: CodeVector
    label: PoseLabel
    source_id: str
    subject_id: str | None = None


@dataclass(frozen=True)
class Gallery:
    config: EncoderConfig
    entries: tuple[GalleryEntry, ...]

    def __post_init__(self):
        fp = self.config.fingerprint()
        lengths = {len(e.vector) for e in self.entries}
        if len(lengths) > 1:
            raise ValueError("gallery entries must share one vector length")
        for e in self.entries:
            if e.vector.config_fingerprint != fp:
                raise ValueError(
                    f"entry {e.source_id!r} was encoded with a different configuration"
                )
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self) -> int:
        return len(self.entries)


def encode_image_to_vector(img: GrayImage, cfg: EncoderConfig) -> CodeVector:
    """The query/model pipeline: resize to 256x256, encode, vectorize."""
    return vectorize(encode(resize_to_256(img), cfg))


def build_gallery(manifest: Manifest, cfg: EncoderConfig | None = None) -> Gallery:
    """Encode every manifest row; aborts on the first failure (no partial
    galleries) naming the offending row."""
    cfg = cfg or EncoderConfig()
    entries = []
    for i, row in enumerate(manifest.rows, start=1):
        try:
            img = read_pgm(manifest.resolve(row))
            vec = encode_image_to_vector(img, cfg)
        except (OSError, ValueError) as exc:
            raise GalleryBuildError(f"manifest row {i} ({row.path}): {exc}") from exc
        entries.append(GalleryEntry(vec, row.label, row.path, row.subject))
    return Gallery(cfg, tuple(entries))


def query(g: Gallery, img: GrayImage, mode: str = "symbol") -> tuple[PoseLabel, int, str]:
    """Nearest gallery entry by Hamming distance; ties go to the lowest
    entry index. Returns (label, distance, source_id)."""
    if not g.entries:
        raise EmptyGalleryError("cannot query an empty gallery")
    vec = encode_image_to_vector(img, g.config)
    best_i = -1
    best_d = -1
    for i, e in enumerate(g.entries):
        d = hamming(vec, e.vector, mode)
        if best_i < 0 or d < best_d:
            best_i, best_d = i, d
    e = g.entries[best_i]
    return e.label, best_d, e.source_id


# ---------------------------------------------------------------------------
# binary format


def _pack_str(s: str | None) -> bytes:
    raw = (s or "").encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def gallery_to_bytes(g: Gallery) -> bytes:
    parts = [
        _GALLERY_HEADER.pack(
            _GALLERY_MAGIC,
            _GALLERY_VERSION,
            *g.config.packed_fields(),
            len(g.entries),
        )
    ]
    for e in g.entries:
        parts.append(struct.pack("<ddd", e.label.pitch, e.label.yaw, e.label.roll))
        parts.append(_pack_str(e.source_id))
        parts.append(_pack_str(e.subject_id))
        sym = e.vector.symbols
        parts.append(struct.pack("<I", sym.size))
        parts.append(sym.astype("<u4").tobytes())
    return b"".join(parts)


def gallery_from_bytes(data: bytes) -> Gallery:
    if len(data) < _GALLERY_HEADER.size:
        raise FormatError("gallery: truncated header")
    magic, version, n, stride, s_max_fp, s_bits, o_bits, count = (
        _GALLERY_HEADER.unpack_from(data, 0)
    )
    if magic != _GALLERY_MAGIC:
        raise FormatError(f"gallery: bad magic {magic!r}")
    if version != _GALLERY_VERSION:
        raise FormatError(f"gallery: unsupported version {version}")
    try:
        cfg = EncoderConfig(
            range_size=n,
            domain_stride=stride,
            s_max=s_max_fp / 10000.0,
            s_bits=s_bits,
            o_bits=o_bits,
        )
    except ValueError as exc:
        raise FormatError(f"gallery: invalid config ({exc})") from exc
    fp = cfg.fingerprint()
    off = _GALLERY_HEADER.size

    def take(nbytes: int) -> bytes:
        nonlocal off
        if off + nbytes > len(data):
            raise FormatError("gallery: truncated entry data")
        chunk = data[off : off + nbytes]
        off += nbytes
        return chunk

    def take_str() -> str:
        (ln,) = struct.unpack("<I", take(4))
        return take(ln).decode("utf-8")

    entries = []
    for _ in range(count):
        pitch, yaw, roll = struct.unpack("<ddd", take(24))
        source_id = take_str()
        subject = take_str() or None
        (vlen,) = struct.unpack("<I", take(4))
        sym = np.frombuffer(take(4 * vlen), dtype="<u4").astype(np.uint32)
        try:
            entries.append(
                GalleryEntry(CodeVector(sym, fp), PoseLabel(pitch, yaw, roll), source_id, subject)
            )
        except ValueError as exc:
            raise FormatError(f"gallery: invalid entry ({exc})") from exc
    if off != len(data):
        raise FormatError("gallery: trailing bytes after last entry")
    try:
        return Gallery(cfg, tuple(entries))
    except ValueError as exc:
        raise FormatError(f"gallery: inconsistent entries ({exc})") from exc


def save_gallery(g: Gallery, path) -> None:
    Path(path).write_bytes(gallery_to_bytes(g))


def load_gallery(path) -> Gallery:
    return gallery_from_bytes(Path(path).read_bytes())
