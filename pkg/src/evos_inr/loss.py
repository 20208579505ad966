"""Cross-frequency supervision on a sparse coordinate subset.

The low-frequency term is plain squared error on the trained subset ``z``.
The high-frequency term compares Laplacians over the full grid, where the
field is assembled from fresh predictions on ``z`` and cached predictions
everywhere else. Cached entries are constants, so gradient only reaches the
rows in ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .laplacian import laplacian, laplacian_adjoint
from .selector import FitnessCache
from .signal import Signal

REDUCTIONS = ("mean", "sum")


@dataclass(frozen=True)
class LossConfig:
    lambda_low: float = 1.0
    lambda_high: float = 1e-5
    # "sum" reproduces unnormalized squared norms
    reduction: str = "mean"
    laplacian_kernel: int = 4

    def __post_init__(self):
        if self.lambda_low < 0 or self.lambda_high < 0:
            raise ValueError("loss weights must be non-negative")
        if self.reduction not in REDUCTIONS:
            raise ValueError(f"reduction must be one of {REDUCTIONS}")


@dataclass(frozen=True)
class LossReport:
    total: float
    low: float
    high: float


def mse_loss(pred: np.ndarray, target: np.ndarray, reduction: str = "mean"):
    """Squared error and its gradient with respect to ``pred``."""
    diff = pred - target
    scale = 1.0 / diff.size if reduction == "mean" else 1.0
    return float(np.vdot(diff, diff)) * scale, (2.0 * scale) * diff


def merged_field(pred_z: np.ndarray, z: np.ndarray, cache: FitnessCache | None) -> np.ndarray:
    """Full-grid field: ``pred_z`` on ``z``, cached predictions elsewhere."""
    if cache is None:
        raise ValueError("merging needs a populated fitness cache")
    if len(pred_z) != len(z):
        raise ValueError(f"{len(pred_z)} predictions for {len(z)} coordinates")
    merged = cache.predictions.astype(np.float64)
    merged[z] = pred_z
    return merged


def cross_frequency_loss(pred_z: np.ndarray, z: np.ndarray, cache: FitnessCache | None,
                         truth: Signal, config: LossConfig,
                         truth_laplacian: np.ndarray | None = None):
    """Return ``(LossReport, grad_z)`` for predictions at subset ``z``.

    With ``lambda_high == 0`` the Laplacian term is skipped and the cache
    is not needed. ``truth_laplacian`` may be passed to avoid refiltering
    the ground truth on every call.
    """
    pred_z = np.asarray(pred_z)
    y_z = truth.attrs[z]
    if pred_z.shape != y_z.shape:
        raise ValueError(f"prediction shape {pred_z.shape} != target shape {y_z.shape}")
    low, grad = mse_loss(pred_z, y_z, config.reduction)
    grad *= config.lambda_low
    high = 0.0
    if config.lambda_high > 0:
        grid, kernel = truth.grid, config.laplacian_kernel
        merged = merged_field(pred_z, z, cache)
        if truth_laplacian is None:
            truth_laplacian = laplacian(truth.attrs, grid, kernel)
        resid = laplacian(merged, grid, kernel) - truth_laplacian
        scale = 1.0 / resid.size if config.reduction == "mean" else 1.0
        high = float(np.vdot(resid, resid)) * scale
        back = laplacian_adjoint(resid, grid, kernel)
        grad += (config.lambda_high * 2.0 * scale) * back[z]
    total = config.lambda_low * low + config.lambda_high * high
    return LossReport(total, low, high), grad
