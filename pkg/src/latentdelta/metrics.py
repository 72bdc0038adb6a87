"""Reference-free image comparison metrics: MSE, PSNR, windowed SSIM."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _check_pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, data_range: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give +inf."""
    err = mse(a, b)
    if err == 0:
        return float("inf")
    return float(10.0 * np.log10(data_range ** 2 / err))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2 * sigma ** 2))
    window = np.outer(g, g)
    return window / window.sum()


def ssim(a, b, data_range: float = 255.0) -> float:
    """Mean local structural similarity over an 11x11 Gaussian window.

    Grayscale 2-d inputs at least as large as the window; only fully
    overlapping window positions contribute (the border is cropped).
    """
    a, b = _check_pair(a, b)
    if a.ndim != 2:
        raise ValueError("ssim expects 2-d grayscale arrays")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(
            f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    window = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def smooth(img):
        return correlate(img, window, mode="constant")

    half = SSIM_WINDOW // 2
    crop = (slice(half, -half), slice(half, -half))
    mu_a = smooth(a)[crop]
    mu_b = smooth(b)[crop]
    var_a = smooth(a * a)[crop] - mu_a ** 2
    var_b = smooth(b * b)[crop] - mu_b ** 2
    cov = smooth(a * b)[crop] - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
