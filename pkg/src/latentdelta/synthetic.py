"""Synthetic worlds with known geometry, used for fixtures and experiments.

Three generators:

* linear world — style differences are an exact fixed linear map of
  normalized-embedding differences, so a direction mapper can fit it
  near-perfectly and the residual is purely optimization error.
* paired world — two embedding "modalities" share a latent semantic but sit
  in offset cones (constant per-modality offset plus small noise). Raw
  cross-modal similarity is low while difference vectors stay aligned, and
  style codes are tied to the shared semantic for A/B experiments.
* constant-style world — varying embeddings, all style codes equal, so every
  training target direction is exactly zero.

All generators are deterministic functions of their seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import Bundle, LevelPartition, make_bundle
from .delta_features import unit_normalize

DEFAULT_CLIP_DIM = 64
DEFAULT_STYLE_DIM = 96
DEFAULT_PARTITION = (32, 64)


@dataclass
class LinearWorld:
    bundle: Bundle
    direction_map: np.ndarray  # style delta = direction_map @ clip delta
    probe_table: np.ndarray    # style -> clip-space linear probe, rows per channel


@dataclass
class PairedWorld:
    bundle: Bundle             # clip = image-side embeddings, style = codes
    texts: np.ndarray          # text-side embeddings, row-paired with records
    semantic: np.ndarray       # shared latent semantic per record
    style_map: np.ndarray      # style = style_map @ semantic
    image_offset: np.ndarray
    text_offset: np.ndarray
    probe_table: np.ndarray


def _partition(style_dim, partition):
    c_end, m_end = partition
    return LevelPartition(c_end, m_end, style_dim)


def linear_world(n: int, clip_dim=DEFAULT_CLIP_DIM, style_dim=DEFAULT_STYLE_DIM,
                 partition=DEFAULT_PARTITION, seed=0) -> LinearWorld:
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(style_dim, clip_dim)) / np.sqrt(style_dim)
    clips = rng.normal(size=(n, clip_dim))
    styles = unit_normalize(clips) @ a.T
    bundle = make_bundle(clips, styles, _partition(style_dim, partition),
                         manifest={"world": "linear", "seed": seed})
    probe = np.linalg.pinv(a).T  # maps style codes back to embedding space
    return LinearWorld(bundle=bundle, direction_map=a, probe_table=probe)


def paired_world(n: int, clip_dim=DEFAULT_CLIP_DIM, style_dim=DEFAULT_STYLE_DIM,
                 partition=DEFAULT_PARTITION, seed=0, offset_norm=1.5,
                 noise=0.05) -> PairedWorld:
    rng = np.random.default_rng(seed)
    semantic = unit_normalize(rng.normal(size=(n, clip_dim)))
    image_offset = unit_normalize(rng.normal(size=clip_dim)) * offset_norm
    text_offset = unit_normalize(rng.normal(size=clip_dim)) * offset_norm
    # noise is the RMS norm of the perturbation (the semantic has unit norm)
    sigma = noise / np.sqrt(clip_dim)
    images = semantic + image_offset + sigma * rng.normal(size=(n, clip_dim))
    texts = semantic + text_offset + sigma * rng.normal(size=(n, clip_dim))
    style_map = rng.normal(size=(style_dim, clip_dim)) / np.sqrt(style_dim)
    styles = semantic @ style_map.T
    bundle = make_bundle(images, styles, _partition(style_dim, partition),
                         manifest={"world": "paired", "seed": seed,
                                   "offset_norm": offset_norm, "noise": noise})
    probe = np.linalg.pinv(style_map).T
    return PairedWorld(bundle=bundle, texts=texts, semantic=semantic,
                       style_map=style_map, image_offset=image_offset,
                       text_offset=text_offset, probe_table=probe)


def constant_style_world(n: int, clip_dim=DEFAULT_CLIP_DIM,
                         style_dim=DEFAULT_STYLE_DIM,
                         partition=DEFAULT_PARTITION, seed=0) -> Bundle:
    rng = np.random.default_rng(seed)
    clips = rng.normal(size=(n, clip_dim))
    styles = np.tile(rng.normal(size=style_dim), (n, 1))
    return make_bundle(clips, styles, _partition(style_dim, partition),
                       manifest={"world": "constant-style", "seed": seed})
