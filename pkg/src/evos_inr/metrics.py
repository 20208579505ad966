"""Reconstruction quality (MSE, PSNR, SSIM) and fitness-drift diagnostics.

Attributes live in [0, 1], so the PSNR peak is 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .selector import top_k
from .signal import GridSpec, round_half_up

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class QualitySnapshot:
    iteration: int
    elapsed_seconds: float
    psnr: float
    ssim: float
    mse: float


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return pred, truth


def mse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    diff = pred - truth
    return float(np.vdot(diff, diff) / diff.size)


def psnr_from_mse(value: float) -> float:
    if value == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / value)


def psnr(pred, truth) -> float:
    """PSNR in dB for peak 1; ``inf`` for identical inputs."""
    return psnr_from_mse(mse(pred, truth))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    w = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return w / w.sum()


def _filter_valid(img: np.ndarray, w: np.ndarray) -> np.ndarray:
    r = len(w) // 2
    out = correlate1d(img, w, axis=0, mode="constant")
    out = correlate1d(out, w, axis=1, mode="constant")
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim_channel(a: np.ndarray, b: np.ndarray) -> float:
    w = gaussian_window()
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    mu_a = _filter_valid(a, w)
    mu_b = _filter_valid(b, w)
    var_a = _filter_valid(a * a, w) - mu_a ** 2
    var_b = _filter_valid(b * b, w) - mu_b ** 2
    cov = _filter_valid(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(pred, truth, grid: GridSpec) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows, averaged over channels."""
    pred, truth = _pair(pred, truth)
    if grid.rank != 2:
        raise ValueError("SSIM needs a rank-2 grid")
    if min(grid.extents) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs extents >= {SSIM_WINDOW}, got {grid.extents}")
    pa = pred.reshape(grid.shape)
    ta = truth.reshape(grid.shape)
    return float(np.mean([ssim_channel(pa[..., c], ta[..., c]) for c in range(grid.channels)]))


def distribution_change(fit_a, fit_b, sigma: float, union: bool = False) -> float:
    """Overlap of the top-``sigma N`` error sets of two fitness snapshots.

    Returns ``|A & B| / (sigma N)`` in [0, 1]; with ``union=True`` the
    numerator is ``|A | B|`` instead, giving values in [1, 2].
    """
    fit_a = np.asarray(fit_a)
    fit_b = np.asarray(fit_b)
    if fit_a.shape != fit_b.shape or fit_a.ndim != 1:
        raise ValueError("fitness vectors must be 1-D and equally long")
    if not 0.0 < sigma < 1.0:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")
    size = min(max(round_half_up(sigma * fit_a.size), 1), fit_a.size)
    a = top_k(fit_a, size)
    b = top_k(fit_b, size)
    if union:
        count = np.union1d(a, b).size
    else:
        count = np.intersect1d(a, b, assume_unique=True).size
    return count / size
