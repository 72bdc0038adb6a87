"""Independent numerical oracles shared by the test suite.

Everything here recomputes expected values through a route that does not go
through the code path under test (finite differences, straight-line numpy,
quadrature), so the main implementations and these checks can only agree by
being right.
"""

import numpy as np

from latentdelta import autodiff as ad


def numeric_gradient(root, wrt, h=1e-5, bindings=None):
    """Central finite-difference gradient of the scalar at ``root``.

    ``wrt`` is a param node whose entries get perturbed one at a time.
    """
    base = wrt.value
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        f_plus = float(ad.forward(root, bindings))
        flat[i] = keep - h
        f_minus = float(ad.forward(root, bindings))
        flat[i] = keep
        gflat[i] = (f_plus - f_minus) / (2.0 * h)
    ad.forward(root, bindings)  # restore cached values at the base point
    return grad


def gradient_gap(root, params, bindings=None, h=1e-5):
    """Max floored-relative error between backward() and finite differences.

    The error for each entry is |analytic - numeric| / max(1, |analytic|,
    |numeric|); graphs are scaled so gradients are O(1), which makes the
    floor inert except where both routes agree the entry is tiny.
    """
    ad.forward(root, bindings)
    analytic = ad.backward(root)
    worst = 0.0
    for p in params:
        num = numeric_gradient(root, p, h=h, bindings=bindings)
        ana = analytic[p.name]
        denom = np.maximum(1.0, np.maximum(np.abs(ana), np.abs(num)))
        worst = max(worst, float(np.max(np.abs(ana - num) / denom)))
    return worst


def unit_rows(a):
    a = np.asarray(a, dtype=np.float64)
    return a / np.linalg.norm(a, axis=-1, keepdims=True)


def cosine_rows(a, b):
    """Per-row cosine similarity, computed directly."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    num = (a * b).sum(axis=-1)
    den = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
    return num / den
