"""Writers for the consuming engine's file formats.

Implemented from the published layout (bundle: ``DLSP`` header + fixed-stride
float32 records + JSON sidecar; loose matrices: headerless little-endian
float32 rows). Deliberately independent of the consumer package so the
format contract is exercised at the boundary, not compiled away.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

BUNDLE_MAGIC = b"DLSP"
BUNDLE_VERSION = 1
HEADER = struct.Struct("<4sIIIIII")


def write_bundle(path, clips, styles, c_end, m_end, manifest: dict):
    """Write records + sidecar manifest; returns the record count."""
    clips = np.asarray(clips, dtype=np.float64)
    styles = np.asarray(styles, dtype=np.float64)
    n, d_i = clips.shape
    d_s = styles.shape[1]
    if styles.shape[0] != n:
        raise ValueError(f"{n} embeddings but {styles.shape[0]} style codes")
    if not 0 < c_end < m_end < d_s:
        raise ValueError(f"partition ({c_end}, {m_end}) invalid for dim {d_s}")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(BUNDLE_MAGIC, BUNDLE_VERSION, n, d_i, d_s,
                             c_end, m_end))
        for clip, style in zip(clips, styles):
            fh.write(clip.astype("<f4").tobytes())
            fh.write(style.astype("<f4").tobytes())
    Path(str(path) + ".json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True))
    return n


def write_rows(path, rows):
    """Headerless float32 row matrix (text embeddings, probe tables)."""
    np.asarray(rows, dtype=np.float64).astype("<f4").tofile(path)
