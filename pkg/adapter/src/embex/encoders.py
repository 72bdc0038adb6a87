"""Encoder registry: images or texts to embedding rows, style codes included.

Two families:

* Deterministic featurizers ("hash-projection" for text, "pixel-projection"
  for images and style codes). Fixed seeded projections of pixel/token
  statistics: no downloads, bit-identical reruns, any output width. These
  are fixture-grade stand-ins with the right shapes and determinism
  guarantees, not semantic encoders.
* Optional real encoders: a CLIP wrapper (needs transformers + local
  weights) and an npz lookup for precomputed inversion codes keyed by
  filename. Registered lazily so the core path has no heavy dependencies.

Embeddings are never normalized here; normalization is the consuming
engine's job, so that convention lives in exactly one place.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np
from PIL import Image

THUMB = 32  # deterministic featurizers look at a 32x32 thumbnail
TEXT_BUCKETS = 4096


def _seeded_matrix(tag: str, rows: int, cols: int) -> np.ndarray:
    """Projection matrix derived from a stable hash of the tag string."""
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.standard_normal((rows, cols)) / np.sqrt(rows)


def _thumbnail(path, mode):
    with Image.open(path) as img:
        small = img.convert(mode).resize((THUMB, THUMB), Image.BILINEAR)
    return np.asarray(small, dtype=np.float64).reshape(-1) / 255.0


class PixelProjectionImageEncoder:
    """Image embedding: RGB thumbnail pixels through a fixed projection."""

    name = "pixel-projection"
    version = "1"

    def __init__(self, dim=512):
        self.dim = dim
        self._matrix = _seeded_matrix(f"{self.name}:{self.version}:image:{dim}",
                                      THUMB * THUMB * 3, dim)

    def encode(self, path) -> np.ndarray:
        return _thumbnail(path, "RGB") @ self._matrix


class PixelProjectionStyleEncoder:
    """Style code: grayscale thumbnail pixels through a fixed projection."""

    name = "pixel-projection"
    version = "1"

    def __init__(self, dim=96):
        self.dim = dim
        self._matrix = _seeded_matrix(f"{self.name}:{self.version}:style:{dim}",
                                      THUMB * THUMB, dim)

    def encode(self, path) -> np.ndarray:
        return _thumbnail(path, "L") @ self._matrix

    def probe_table(self, image_encoder: PixelProjectionImageEncoder) -> np.ndarray:
        """Linear style-to-embedding relation of this encoder pair.

        Grayscale pixels are the shared source, so the induced map is
        pinv(W_style) @ W_image restricted to the gray channel average.
        """
        w_img = image_encoder._matrix
        gray = w_img.reshape(THUMB * THUMB, 3, image_encoder.dim).mean(axis=1)
        return np.linalg.pinv(self._matrix) @ gray


class HashProjectionTextEncoder:
    """Text embedding: hashed unigrams+bigrams through a fixed projection."""

    name = "hash-projection"
    version = "1"

    def __init__(self, dim=512):
        self.dim = dim
        self._matrix = _seeded_matrix(f"{self.name}:{self.version}:text:{dim}",
                                      TEXT_BUCKETS, dim)

    @staticmethod
    def _tokens(prompt: str):
        words = re.findall(r"[a-z0-9]+", prompt.lower())
        return words + [f"{a} {b}" for a, b in zip(words, words[1:])]

    def encode(self, prompt: str) -> np.ndarray:
        counts = np.zeros(TEXT_BUCKETS)
        for token in self._tokens(prompt):
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:4], "little") % TEXT_BUCKETS
            sign = 1.0 if digest[4] & 1 else -1.0
            counts[bucket] += sign
        return counts @ self._matrix


class NpzStyleLookup:
    """Style codes precomputed elsewhere (e.g. a GAN inversion encoder run
    offline), stored in an .npz keyed by image filename."""

    name = "npz-lookup"
    version = "1"

    def __init__(self, npz_path, dim=None):
        self._table = np.load(npz_path)
        first = self._table[self._table.files[0]]
        self.dim = int(first.shape[0]) if dim is None else dim

    def encode(self, path) -> np.ndarray:
        key = str(path).rsplit("/", 1)[-1]
        if key not in self._table.files:
            raise KeyError(f"no precomputed style code for {key!r}")
        return np.asarray(self._table[key], dtype=np.float64)


class ClipImageEncoder:
    """Real CLIP image tower via transformers; needs local weights."""

    name = "clip"

    def __init__(self, model_id="openai/clip-vit-base-patch32", dim=512):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise RuntimeError(
                "the 'clip' encoder needs the transformers extra installed") from exc
        self._torch = torch
        self._model = CLIPModel.from_pretrained(model_id)
        self._model.eval()
        self._processor = CLIPProcessor.from_pretrained(model_id)
        self.version = model_id
        self.dim = dim

    def encode(self, path) -> np.ndarray:
        with Image.open(path) as img:
            inputs = self._processor(images=img.convert("RGB"),
                                     return_tensors="pt")
        with self._torch.no_grad():
            features = self._model.get_image_features(**inputs)
        return features[0].numpy().astype(np.float64)


class ClipTextEncoder:
    """Real CLIP text tower via transformers; needs local weights."""

    name = "clip"

    def __init__(self, model_id="openai/clip-vit-base-patch32", dim=512):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise RuntimeError(
                "the 'clip' encoder needs the transformers extra installed") from exc
        self._torch = torch
        self._model = CLIPModel.from_pretrained(model_id)
        self._model.eval()
        self._processor = CLIPProcessor.from_pretrained(model_id)
        self.version = model_id
        self.dim = dim

    def encode(self, prompt: str) -> np.ndarray:
        inputs = self._processor(text=[prompt], return_tensors="pt",
                                 padding=True)
        with self._torch.no_grad():
            features = self._model.get_text_features(**inputs)
        return features[0].numpy().astype(np.float64)


def image_encoder(name: str, dim: int):
    if name == "pixel-projection":
        return PixelProjectionImageEncoder(dim)
    if name == "clip":
        return ClipImageEncoder(dim=dim)
    raise ValueError(f"unknown image encoder {name!r}")


def text_encoder(name: str, dim: int):
    if name == "hash-projection":
        return HashProjectionTextEncoder(dim)
    if name == "clip":
        return ClipTextEncoder(dim=dim)
    raise ValueError(f"unknown text encoder {name!r}")


def style_encoder(name: str, dim: int):
    if name == "pixel-projection":
        return PixelProjectionStyleEncoder(dim)
    if name.startswith("npz:"):
        return NpzStyleLookup(name[4:], dim=dim)
    raise ValueError(f"unknown style encoder {name!r}")
