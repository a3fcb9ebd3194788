"""PSNR and SSIM on the BT.601 luminance plane after a border crop."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imaging import check_image

BORDER = 2
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255) ** 2
SSIM_C2 = (0.03 * 255) ** 2


@dataclass(frozen=True)
class QualityScore:
    psnr_db: float
    ssim: float


def rgb_to_y(img) -> np.ndarray:
    """Studio-swing luminance in [16, 235] as float64."""
    rgb = check_image(img).astype(np.float64)
    return 16.0 + (65.481 * rgb[..., 0] + 128.553 * rgb[..., 1] + 24.966 * rgb[..., 2]) / 255.0


def crop_border(plane: np.ndarray, pixels: int) -> np.ndarray:
    plane = np.asarray(plane)
    if pixels < 0:
        raise ValueError(f"crop must be non-negative, got {pixels}")
    if pixels == 0:
        return plane
    h, w = plane.shape[:2]
    if h <= 2 * pixels or w <= 2 * pixels:
        raise ValueError(f"plane {h}x{w} too small for a {pixels}-pixel border crop")
    return plane[pixels:h - pixels, pixels:w - pixels]


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 255.0) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalised 1-D Gaussian; the 2-D window is its outer product."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(plane: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = g.size
    rows = sliding_window_view(plane, k, axis=0) @ g
    return sliding_window_view(rows, k, axis=1) @ g


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM over every fully-contained 11x11 Gaussian window."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"ssim: plane {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    g = gaussian_window()
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


def _y_planes(sr, hr, border: int):
    sr, hr = check_image(sr), check_image(hr)
    if sr.shape != hr.shape:
        raise ValueError(f"image size mismatch: {sr.shape[:2]} vs {hr.shape[:2]}")
    return crop_border(rgb_to_y(sr), border), crop_border(rgb_to_y(hr), border)


def psnr_y(sr, hr, border: int = BORDER) -> float:
    return psnr(*_y_planes(sr, hr, border))


def ssim_y(sr, hr, border: int = BORDER) -> float:
    return ssim(*_y_planes(sr, hr, border))


def score(sr, hr, border: int = BORDER) -> QualityScore:
    a, b = _y_planes(sr, hr, border)
    return QualityScore(psnr(a, b), ssim(a, b))
