"""Embedding bundles: fixed-stride binary storage of (clip, style) records.

Layout, all integers little-endian u32:

    magic "DLSP" | version | N | D_i | D_s | c_end | m_end
    then N records of float32[D_i] followed by float32[D_s]

(c_end, m_end) split style channels into coarse/medium/fine contiguous
blocks; this header partition is the single source of truth for level
splits everywhere downstream. An optional sidecar JSON manifest at
``<path>.json`` carries ids/captions/source tool so the binary payload
stays fixed-stride.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"DLSP"
VERSION = 1
HEADER = struct.Struct("<4sIIIIII")

LEVELS = ("coarse", "medium", "fine")


class BundleFormatError(Exception):
    """Malformed bundle file; carries the failing byte offset."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class LevelPartition:
    """Cut indices splitting [0, dim) into coarse/medium/fine blocks."""

    c_end: int
    m_end: int
    dim: int

    def __post_init__(self):
        if not 0 < self.c_end < self.m_end < self.dim:
            raise ValueError(
                f"partition ({self.c_end}, {self.m_end}) invalid for dim {self.dim}")

    def slices(self) -> dict[str, slice]:
        return {"coarse": slice(0, self.c_end),
                "medium": slice(self.c_end, self.m_end),
                "fine": slice(self.m_end, self.dim)}

    def widths(self) -> dict[str, int]:
        return {name: s.stop - s.start for name, s in self.slices().items()}


@dataclass
class EmbeddingRecord:
    """One item: its image-space embedding and its style code."""

    id: str
    clip: np.ndarray
    style: np.ndarray


@dataclass
class Bundle:
    """Immutable-after-load collection of records plus the level partition."""

    partition: LevelPartition
    records: list[EmbeddingRecord]
    manifest: dict = field(default_factory=dict)

    @property
    def clip_dim(self):
        return self.records[0].clip.shape[0]

    @property
    def style_dim(self):
        return self.partition.dim

    def clips(self) -> np.ndarray:
        return np.stack([r.clip for r in self.records])

    def styles(self) -> np.ndarray:
        return np.stack([r.style for r in self.records])

    def __len__(self):
        return len(self.records)


def make_bundle(clips, styles, partition: LevelPartition, ids=None,
                manifest: dict | None = None) -> Bundle:
    """Assemble a bundle from arrays, validating the shared invariants."""
    clips = np.asarray(clips, dtype=np.float64)
    styles = np.asarray(styles, dtype=np.float64)
    if clips.ndim != 2 or styles.ndim != 2 or clips.shape[0] != styles.shape[0]:
        raise ValueError(f"clips {clips.shape} / styles {styles.shape} disagree")
    if styles.shape[1] != partition.dim:
        raise ValueError(f"style dim {styles.shape[1]} != partition dim {partition.dim}")
    if not (np.isfinite(clips).all() and np.isfinite(styles).all()):
        raise ValueError("non-finite embedding values")
    norms = np.linalg.norm(clips, axis=1)
    if (norms == 0).any():
        raise ValueError(f"zero clip vector at record {int(np.argmin(norms))}")
    if ids is None:
        ids = [f"rec{i:06d}" for i in range(clips.shape[0])]
    records = [EmbeddingRecord(i, c, s) for i, c, s in zip(ids, clips, styles)]
    return Bundle(partition, records, manifest or {})


def _sidecar(path) -> Path:
    return Path(str(path) + ".json")


def write_bundle(bundle: Bundle, path):
    """Serialize; write∘read is the identity at float32 precision."""
    n = len(bundle.records)
    d_i = bundle.clip_dim
    d_s = bundle.style_dim
    part = bundle.partition
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, n, d_i, d_s, part.c_end, part.m_end))
        for rec in bundle.records:
            fh.write(np.asarray(rec.clip, dtype=np.float64).astype("<f4").tobytes())
            fh.write(np.asarray(rec.style, dtype=np.float64).astype("<f4").tobytes())
    if bundle.manifest:
        manifest = dict(bundle.manifest)
        manifest.setdefault("ids", [r.id for r in bundle.records])
        _sidecar(path).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def read_bundle(path) -> Bundle:
    """Parse and validate a bundle file (header, payload size, finiteness)."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise BundleFormatError("file shorter than header", offset=len(raw))
    magic, version, n, d_i, d_s, c_end, m_end = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BundleFormatError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise BundleFormatError(f"unsupported version {version}", offset=4)
    try:
        partition = LevelPartition(c_end, m_end, d_s)
    except ValueError as exc:
        raise BundleFormatError(str(exc), offset=20) from exc
    stride = 4 * (d_i + d_s)
    expected = HEADER.size + n * stride
    if len(raw) != expected:
        raise BundleFormatError(
            f"payload holds {(len(raw) - HEADER.size) // stride} of {n} records",
            offset=min(len(raw), expected))
    flat = np.frombuffer(raw, dtype="<f4", offset=HEADER.size).reshape(n, d_i + d_s)
    if not np.isfinite(flat).all():
        rec, col = np.argwhere(~np.isfinite(flat))[0]
        raise BundleFormatError(
            "non-finite embedding value",
            offset=HEADER.size + int(rec) * stride + 4 * int(col))
    clips = flat[:, :d_i].astype(np.float64)
    styles = flat[:, d_i:].astype(np.float64)
    manifest = {}
    ids = None
    sidecar = _sidecar(path)
    if sidecar.exists():
        manifest = json.loads(sidecar.read_text())
        ids = manifest.get("ids")
        if ids is not None and len(ids) != n:
            raise BundleFormatError(
                f"manifest lists {len(ids)} ids for {n} records")
    return make_bundle(clips, styles, partition, ids=ids, manifest=manifest)


def concat_bundles(a: Bundle, b: Bundle) -> Bundle:
    """Concatenate two bundles sharing dims and partition (e.g. a real-image
    bundle with a sampled-latent bundle; the mix ratio is whatever the two
    record counts give)."""
    if a.partition != b.partition or a.clip_dim != b.clip_dim:
        raise ValueError("bundles disagree on dims or partition")
    ids = [r.id for r in a.records] + [r.id for r in b.records]
    return make_bundle(np.vstack([a.clips(), b.clips()]),
                       np.vstack([a.styles(), b.styles()]),
                       a.partition, ids=ids)


def sample_pairs(bundle: Bundle, count: int, seed: int):
    """Uniform ordered record pairs (source, target), source != target."""
    n = len(bundle)
    if n < 2:
        raise ValueError(f"need at least 2 records to sample pairs, have {n}")
    rng = np.random.default_rng(seed)
    first = rng.integers(0, n, size=count)
    shift = rng.integers(1, n, size=count)
    second = (first + shift) % n
    return [(bundle.records[i], bundle.records[j]) for i, j in zip(first, second)]


def pair_index_stream(n: int, seed: int):
    """Endless deterministic stream of ordered index pairs over n records."""
    if n < 2:
        raise ValueError(f"need at least 2 records to sample pairs, have {n}")
    rng = np.random.default_rng(seed)
    while True:
        i = int(rng.integers(0, n))
        j = (i + int(rng.integers(1, n))) % n
        yield i, j
