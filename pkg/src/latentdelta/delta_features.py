"""Delta features over embedding space, and alignment diagnostics.

The working representation for an edit is a (anchor, delta) pair: the
unit-normalized source embedding plus the difference of unit-normalized
endpoint embeddings. Individual embeddings are normalized; the delta itself
is deliberately not renormalized, so "no change" maps to the zero vector.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


def unit_normalize(v: np.ndarray) -> np.ndarray:
    """Scale to unit L2 norm; zero vectors are rejected."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if (norm == 0).any():
        raise ValueError("cannot normalize a zero vector")
    return v / norm


@dataclass(frozen=True)
class DeltaCondition:
    """Anchor embedding plus embedding-difference direction."""

    anchor: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        if abs(np.linalg.norm(self.anchor) - 1.0) > 1e-9:
            raise ValueError("anchor must be unit-normalized")
        if self.anchor.shape != self.delta.shape:
            raise ValueError("anchor and delta dims disagree")

    def stacked(self) -> np.ndarray:
        """Network input layout: delta first, anchor second."""
        return np.concatenate([self.delta, self.anchor])


def make_delta(e_from, e_to) -> DeltaCondition:
    """Condition for moving from one embedding to another.

    Both endpoints are unit-normalized first, so the result is invariant to
    positive rescaling of either input; equal endpoints give a zero delta.
    """
    a = unit_normalize(e_from)
    b = unit_normalize(e_to)
    return DeltaCondition(anchor=a, delta=b - a)


@dataclass
class AlignmentReport:
    """Pairwise cosine statistics plus the centroid gap of two embedding sets."""

    mean_cosine: float
    median_cosine: float
    std_cosine: float
    modality_gap: float
    count: int

    def to_dict(self):
        return {"mean_cosine": self.mean_cosine,
                "median_cosine": self.median_cosine,
                "std_cosine": self.std_cosine,
                "modality_gap": self.modality_gap,
                "count": self.count}


def alignment_report(paired_a, paired_b) -> AlignmentReport:
    """Quantify how well two paired vector sets agree in direction.

    Inputs are unit-normalized row-wise before anything else, so the report
    is invariant to positive rescaling of any raw embedding. The modality
    gap is the euclidean distance between the two normalized centroids.
    """
    a = np.atleast_2d(np.asarray(paired_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(paired_b, dtype=np.float64))
    if a.shape != b.shape:
        raise ValueError(f"paired sets disagree: {a.shape} vs {b.shape}")
    if a.shape[0] == 0:
        raise ValueError("empty input")
    na = unit_normalize(a)
    nb = unit_normalize(b)
    cosines = (na * nb).sum(axis=1)
    gap = float(np.linalg.norm(na.mean(axis=0) - nb.mean(axis=0)))
    return AlignmentReport(mean_cosine=float(cosines.mean()),
                           median_cosine=float(np.median(cosines)),
                           std_cosine=float(cosines.std()),
                           modality_gap=gap,
                           count=a.shape[0])


def export_csv(embeddings, labels, path):
    """Write labeled high-dimensional points for external 2-D reduction.

    Header is ``label,dim_0,...``; floats printed with 9 significant digits
    (enough to round-trip float32-precision data).
    """
    embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    labels = list(labels)
    if len(labels) != embeddings.shape[0]:
        raise ValueError(f"{len(labels)} labels for {embeddings.shape[0]} rows")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"dim_{i}" for i in range(embeddings.shape[1])])
        for label, row in zip(labels, embeddings):
            writer.writerow([label] + [f"{v:.9g}" for v in row])
