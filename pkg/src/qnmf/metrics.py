"""Image quality metrics and a blind noise-level estimate (0-255 scale)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

PSNR_CAP = 99.0
SSIM_WIN = 11
SSIM_STD = 1.5


@dataclass(frozen=True)
class QualityReport:
    psnr: float
    ssim: float


def _pair(ref, test):
    ref = np.asarray(ref, dtype=float)
    test = np.asarray(test, dtype=float)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {test.shape}")
    return ref, test


def psnr(ref, test, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give ``PSNR_CAP``."""
    ref, test = _pair(ref, test)
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(peak**2 / mse), PSNR_CAP)


def gaussian_window(size: int = SSIM_WIN, std: float = SSIM_STD) -> np.ndarray:
    t = np.arange(size) - (size - 1) / 2
    g = np.exp(-(t**2) / (2 * std**2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_plane(a: np.ndarray, b: np.ndarray, win: np.ndarray, c1: float, c2: float) -> float:
    def filt(x):
        return fftconvolve(x, win, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    saa = filt(a * a) - mu_a**2
    sbb = filt(b * b) - mu_b**2
    sab = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


def ssim(ref, test, peak: float = 255.0) -> float:
    """Structural similarity with an 11x11 Gaussian window (std 1.5), averaged over channels."""
    ref, test = _pair(ref, test)
    if min(ref.shape[:2]) < SSIM_WIN:
        raise ValueError(f"SSIM needs images of at least {SSIM_WIN}x{SSIM_WIN}")
    if ref.ndim == 2:
        ref, test = ref[..., None], test[..., None]
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    win = gaussian_window()
    return float(np.mean([_ssim_plane(ref[..., c], test[..., c], win, c1, c2) for c in range(ref.shape[-1])]))


def quality(ref, test) -> QualityReport:
    return QualityReport(psnr(ref, test), ssim(ref, test))


def estimate_noise(img) -> float:
    """Gaussian noise std from the diagonal detail band of a one-level Haar transform.

    Uses ``median(|HH|) / 0.6745`` per channel and averages over channels.
    """
    img = np.asarray(img, dtype=float)
    if img.ndim == 2:
        img = img[..., None]
    h, w = img.shape[:2]
    if h < 16 or w < 16:
        raise ValueError("noise estimation needs at least 16x16 pixels")
    x = img[: h - h % 2, : w - w % 2]
    hh = (x[0::2, 0::2] - x[0::2, 1::2] - x[1::2, 0::2] + x[1::2, 1::2]) / 2.0
    return float(np.mean(np.median(np.abs(hh), axis=(0, 1)) / 0.6745))
