"""PSNR and SSIM."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1, K2 = 0.01, 0.03


@dataclass(frozen=True)
class QualityScore:
    psnr_db: float
    ssim: float


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give ``math.inf``."""
    if peak <= 0:
        raise ValueError("peak must be positive")
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def format_psnr(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.4f}"


def gaussian_window(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_plane(a: np.ndarray, b: np.ndarray, window: np.ndarray, c1: float, c2: float) -> float:
    def filt(x):
        return convolve2d(x, window, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a, b, peak: float = 1.0) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over channels.

    Accepts ``[H,W]``, ``[C,H,W]`` or ``[1,C,H,W]``.
    """
    a, b = _pair(a, b)
    if a.ndim == 4:
        if a.shape[0] != 1:
            raise ValueError("ssim compares single images, got a batch")
        a, b = a[0], b[0]
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3:
        raise ValueError(f"expected [H,W] or [C,H,W], got shape {a.shape}")
    if min(a.shape[1:]) < WINDOW_SIZE:
        raise ValueError(f"image {a.shape[1:]} smaller than the {WINDOW_SIZE}x{WINDOW_SIZE} window")
    window = gaussian_window()
    c1, c2 = (K1 * peak) ** 2, (K2 * peak) ** 2
    return float(np.mean([_ssim_plane(pa, pb, window, c1, c2) for pa, pb in zip(a, b)]))


def quality(a, b, peak: float = 1.0) -> QualityScore:
    return QualityScore(psnr(a, b, peak), ssim(a, b, peak))
