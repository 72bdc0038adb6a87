"""Checkpoint container: JSON manifest + little-endian float32 blob.

Layout: magic ``DLCP`` | u32 version | u32 manifest length | manifest JSON
(UTF-8) | float32 payload, arrays concatenated in manifest order. The
manifest carries a ``kind`` tag so mapper weights, noise-predictor weights
and relevance matrices share one container.

Raw float32 blobs (no header) are used for loose vectors/matrices consumed
by the command line: helpers for those live here too.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DLCP"
VERSION = 1


class CheckpointError(Exception):
    """Malformed checkpoint container; carries the failing byte offset."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


def save_params(path, arrays: dict[str, np.ndarray], kind: str, meta: dict | None = None):
    """Write named arrays (computed at float64, stored float32)."""
    entries = []
    blob = bytearray()
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        entries.append({"name": name, "shape": list(arr.shape)})
        blob += arr.astype("<f4").tobytes()
    manifest = {"kind": kind, "dtype": "float32", "params": entries,
                "meta": meta or {}}
    encoded = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(encoded)))
        fh.write(encoded)
        fh.write(blob)


def load_params(path):
    """Read a container; returns (kind, {name: float64 array}, meta)."""
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise CheckpointError("file shorter than header", offset=len(raw))
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}", offset=0)
    version, manifest_len = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}", offset=4)
    if len(raw) < 12 + manifest_len:
        raise CheckpointError("truncated manifest", offset=len(raw))
    try:
        manifest = json.loads(raw[12:12 + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable manifest: {exc}", offset=12) from exc
    if manifest.get("dtype") != "float32":
        raise CheckpointError(f"unsupported dtype {manifest.get('dtype')!r}")
    offset = 12 + manifest_len
    arrays = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(raw):
            raise CheckpointError(
                f"truncated payload for {entry['name']!r}", offset=len(raw))
        arr = np.frombuffer(raw[offset:end], dtype="<f4").reshape(shape)
        if not np.isfinite(arr).all():
            bad = int(np.flatnonzero(~np.isfinite(arr.reshape(-1)))[0])
            raise CheckpointError(
                f"non-finite value in {entry['name']!r}", offset=offset + 4 * bad)
        arrays[entry["name"]] = arr.astype(np.float64)
        offset = end
    if offset != len(raw):
        raise CheckpointError("trailing bytes after payload", offset=offset)
    return manifest["kind"], arrays, manifest.get("meta", {})


# ---------------------------------------------------------------------------
# Raw float32 blobs (loose vectors / row matrices, shape supplied by caller)

def save_raw(path, array):
    np.asarray(array, dtype=np.float64).astype("<f4").tofile(path)


def load_raw(path, columns: int | None = None):
    """Load a raw little-endian float32 blob.

    With ``columns`` the flat payload is reshaped to (-1, columns); the
    element count must divide evenly. Non-finite payloads are rejected.
    """
    data = np.fromfile(path, dtype="<f4").astype(np.float64)
    if not np.isfinite(data).all():
        bad = int(np.flatnonzero(~np.isfinite(data))[0])
        raise CheckpointError(f"non-finite value in raw blob {path}", offset=4 * bad)
    if columns is not None:
        if data.size % columns:
            raise CheckpointError(
                f"raw blob {path} holds {data.size} floats, not divisible by {columns}")
        data = data.reshape(-1, columns)
    return data
