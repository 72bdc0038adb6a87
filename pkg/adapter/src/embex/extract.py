"""Extraction jobs: image folders to bundles, prompt lists to embedding rows."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import UnidentifiedImageError

from . import encoders
from .formats import write_bundle, write_rows

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".webp")


@dataclass
class ExtractionJob:
    """What to read, which encoders to run, where the bundle goes."""

    image_dir: str
    out_path: str
    image_encoder: str = "pixel-projection"
    style_encoder: str = "pixel-projection"
    clip_dim: int = 512
    style_dim: int = 96
    c_end: int = 32
    m_end: int = 64
    extra_manifest: dict = field(default_factory=dict)


def list_images(image_dir):
    root = Path(image_dir)
    if not root.is_dir():
        raise NotADirectoryError(f"{image_dir} is not a directory")
    return sorted(p for p in root.iterdir()
                  if p.suffix.lower() in IMAGE_SUFFIXES)


def extract_images(job: ExtractionJob) -> dict:
    """Encode every readable image into one record; skip the rest loudly.

    Returns the manifest that was written alongside the bundle.
    """
    img_enc = encoders.image_encoder(job.image_encoder, job.clip_dim)
    sty_enc = encoders.style_encoder(job.style_encoder, job.style_dim)
    clips, styles, ids, skipped = [], [], [], []
    for path in list_images(job.image_dir):
        try:
            clip = img_enc.encode(path)
            style = sty_enc.encode(path)
        except (OSError, UnidentifiedImageError, KeyError) as exc:
            warnings.warn(f"skipping {path.name}: {exc}")
            skipped.append({"file": path.name, "reason": str(exc)})
            continue
        clips.append(clip)
        styles.append(style)
        ids.append(path.name)
    if not ids:
        raise ValueError(f"no readable images in {job.image_dir}")
    manifest = {
        "ids": ids,
        "skipped": skipped,
        "encoder": {"image": f"{img_enc.name}-v{img_enc.version}",
                    "style": f"{sty_enc.name}-v{sty_enc.version}"},
        "partition": [job.c_end, job.m_end, job.style_dim],
        **job.extra_manifest,
    }
    write_bundle(job.out_path, np.array(clips), np.array(styles),
                 job.c_end, job.m_end, manifest)
    return manifest


def extract_texts(prompts, out_path, encoder="hash-projection",
                  dim=512) -> int:
    """One embedding row per prompt, in order; returns the row count."""
    prompts = list(prompts)
    if not prompts:
        raise ValueError("empty prompt list")
    enc = encoders.text_encoder(encoder, dim)
    write_rows(out_path, np.array([enc.encode(p) for p in prompts]))
    return len(prompts)


def write_probe_table(out_path, image_encoder="pixel-projection",
                      style_encoder="pixel-projection", clip_dim=512,
                      style_dim=96):
    """Tabulate the linear style-to-embedding relation of an encoder pair."""
    sty = encoders.style_encoder(style_encoder, style_dim)
    img = encoders.image_encoder(image_encoder, clip_dim)
    if not hasattr(sty, "probe_table"):
        raise ValueError(f"style encoder {style_encoder!r} cannot be tabulated")
    table = sty.probe_table(img)
    write_rows(out_path, table)
    return table.shape
