"""Interpolation of codes and stochastic vectors, plus level splicing."""

from __future__ import annotations

import numpy as np

from .bundle import LEVELS, LevelPartition

SLERP_PARALLEL_EPS = 1e-6  # below this angle, fall back to lerp


def _check_weight(w, name):
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {w}")


def lerp_codes(s1, s2, lam: float) -> np.ndarray:
    """Linear mix lam * s1 + (1 - lam) * s2 (lam = 1 returns s1)."""
    _check_weight(lam, "lam")
    return lam * np.asarray(s1, dtype=np.float64) \
        + (1.0 - lam) * np.asarray(s2, dtype=np.float64)


def lerp_edits(edited_a, edited_b, omega: float) -> np.ndarray:
    """Blend two edited codes: omega * a + (1 - omega) * b."""
    _check_weight(omega, "omega")
    return lerp_codes(edited_a, edited_b, omega)


def slerp(x1, x2, lam: float) -> np.ndarray:
    """Great-circle interpolation between two stochastic vectors.

    x^lam = sin((1-lam) theta)/sin(theta) x1 + sin(lam theta)/sin(theta) x2
    with theta the angle between the inputs; lam = 0 returns x1. Nearly
    parallel inputs fall back to lerp; antipodal inputs are rejected (the
    great circle is not unique there).
    """
    _check_weight(lam, "lam")
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    n1, n2 = np.linalg.norm(x1), np.linalg.norm(x2)
    if n1 == 0 or n2 == 0:
        raise ValueError("slerp endpoints must be non-zero")
    cos = np.clip(np.dot(x1, x2) / (n1 * n2), -1.0, 1.0)
    theta = np.arccos(cos)
    if theta < SLERP_PARALLEL_EPS:
        return (1.0 - lam) * x1 + lam * x2
    if theta > np.pi - SLERP_PARALLEL_EPS:
        raise ValueError("slerp endpoints are antipodal")
    sin_theta = np.sin(theta)
    return (np.sin((1.0 - lam) * theta) * x1 + np.sin(lam * theta) * x2) / sin_theta


def splice_styles(content, style, partition: LevelPartition,
                  levels_from_style) -> np.ndarray:
    """Replace the selected level slices of the content code with the style
    code's slices; the rest stays content."""
    content = np.asarray(content, dtype=np.float64)
    style = np.asarray(style, dtype=np.float64)
    if content.shape != style.shape or content.shape[-1] != partition.dim:
        raise ValueError(
            f"codes {content.shape}/{style.shape} do not fit partition dim {partition.dim}")
    levels = set(levels_from_style)
    unknown = levels - set(LEVELS)
    if unknown:
        raise ValueError(f"unknown level names: {sorted(unknown)}")
    mixed = content.copy()
    for name, sl in partition.slices().items():
        if name in levels:
            mixed[..., sl] = style[..., sl]
    return mixed
