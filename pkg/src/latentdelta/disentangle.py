"""Per-channel relevance estimation and threshold masking.

For each style channel, probe how the image-space embedding moves when that
channel is nudged (central differences, averaged over base codes). The
resulting unit directions form a relevance matrix; a text-direction edit
then keeps only channels whose image-space direction correlates with the
text delta above a threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import load_params, save_params

NULL_ROW_NORM = 1e-12  # below this a channel is considered change-free


class TabulatedLinearProbe:
    """Linear style-to-embedding probe backed by a (channels x embed) table."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=np.float64)
        if self.table.ndim != 2:
            raise ValueError("probe table must be 2-d (style_dim x embed_dim)")

    @property
    def style_dim(self):
        return self.table.shape[0]

    def __call__(self, style_code):
        style_code = np.asarray(style_code, dtype=np.float64)
        if style_code.shape != (self.style_dim,):
            raise ValueError(
                f"probe expects dim {self.style_dim}, got {style_code.shape}")
        return style_code @ self.table


@dataclass
class RelevanceMatrix:
    """Unit image-space change direction per style channel.

    Rows with no measurable change are flagged null and stored as zeros.
    """

    directions: np.ndarray  # (style_dim, embed_dim), null rows all-zero
    null_rows: np.ndarray   # bool per channel

    @property
    def style_dim(self):
        return self.directions.shape[0]

    def save(self, path):
        save_params(path, {"directions": self.directions},
                    kind="relevance-matrix",
                    meta={"style_dim": int(self.directions.shape[0]),
                          "embed_dim": int(self.directions.shape[1])})

    @classmethod
    def load(cls, path) -> "RelevanceMatrix":
        kind, arrays, _ = load_params(path)
        if kind != "relevance-matrix":
            raise ValueError(f"checkpoint kind {kind!r} is not a relevance matrix")
        directions = arrays["directions"]
        nulls = np.linalg.norm(directions, axis=1) < NULL_ROW_NORM
        return cls(directions=directions, null_rows=nulls)


@dataclass
class RelevanceMask:
    """Keep/zero decision per channel at a given threshold."""

    keep: np.ndarray    # bool per channel
    tau: float
    scores: np.ndarray  # |cos| relevance per channel, null rows score 0

    def as_multiplier(self) -> np.ndarray:
        return self.keep.astype(np.float64)

    def kept_channels(self):
        return np.flatnonzero(self.keep)


def estimate_relevance(probe, base_codes, step: float = 0.5) -> RelevanceMatrix:
    """Probe every style channel with central differences.

    row_c = normalize(mean over base codes of probe(s + step*e_c) -
    probe(s - step*e_c)). Channels the probe ignores come back as null rows
    rather than errors.
    """
    if step <= 0:
        raise ValueError("probe step must be positive")
    base_codes = np.atleast_2d(np.asarray(base_codes, dtype=np.float64))
    if base_codes.shape[0] < 1:
        raise ValueError("need at least one base code")
    style_dim = base_codes.shape[1]
    embed_dim = np.asarray(probe(base_codes[0])).shape[0]
    rows = np.zeros((style_dim, embed_dim))
    nulls = np.zeros(style_dim, dtype=bool)
    for c in range(style_dim):
        acc = np.zeros(embed_dim)
        for code in base_codes:
            bumped = code.copy()
            bumped[c] += step
            hi = np.asarray(probe(bumped), dtype=np.float64)
            bumped[c] -= 2 * step
            lo = np.asarray(probe(bumped), dtype=np.float64)
            acc += hi - lo
        acc /= base_codes.shape[0]
        norm = np.linalg.norm(acc)
        if norm < NULL_ROW_NORM:
            nulls[c] = True
        else:
            rows[c] = acc / norm
    return RelevanceMatrix(directions=rows, null_rows=nulls)


def build_mask(matrix: RelevanceMatrix, delta_t, tau: float) -> RelevanceMask:
    """Score channels by |cos| against the text delta; keep those >= tau."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    delta_t = np.asarray(delta_t, dtype=np.float64)
    norm = np.linalg.norm(delta_t)
    if norm == 0:
        raise ValueError("zero text delta")
    unit = delta_t / norm
    scores = np.abs(matrix.directions @ unit)
    scores[matrix.null_rows] = 0.0
    return RelevanceMask(keep=scores >= tau, tau=float(tau), scores=scores)
