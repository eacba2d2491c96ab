"""Reconstruction quality metrics: PSNR and SSIM, per band and averaged.

Cubes are scored band by band with a fixed data range (1.0 for normalized
data) and the per-band values are averaged arithmetically. A zero-MSE
pair reports PSNR as the ``inf`` sentinel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cube import SpectralCube
from .errors import ConfigError, ShapeMismatchError

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def psnr(ref: np.ndarray, rec: np.ndarray, data_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` when the inputs are identical."""
    ref = np.asarray(ref, dtype=np.float64)
    rec = np.asarray(rec, dtype=np.float64)
    if ref.shape != rec.shape:
        raise ShapeMismatchError(f"shape mismatch: {ref.shape} vs {rec.shape}")
    if data_range <= 0:
        raise ConfigError(f"data range must be > 0, got {data_range}")
    mse = float(np.mean((ref - rec) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range**2 / mse)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(offsets**2) / (2.0 * sigma**2))
    return k / k.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable correlation keeping only fully covered (valid) pixels."""
    size = kernel.size
    rows = np.lib.stride_tricks.sliding_window_view(img, size, axis=0) @ kernel
    return np.lib.stride_tricks.sliding_window_view(rows, size, axis=1) @ kernel


def ssim(ref: np.ndarray, rec: np.ndarray, data_range: float = 1.0) -> float:
    """Mean structural similarity with an 11x11 Gaussian window, sigma 1.5.

    Local statistics use Gaussian weighting (no sample-covariance bias
    correction) and only windows fully inside the image contribute, so
    inputs must be at least 11 x 11.
    """
    ref = np.asarray(ref, dtype=np.float64)
    rec = np.asarray(rec, dtype=np.float64)
    if ref.shape != rec.shape:
        raise ShapeMismatchError(f"shape mismatch: {ref.shape} vs {rec.shape}")
    if data_range <= 0:
        raise ConfigError(f"data range must be > 0, got {data_range}")
    if ref.ndim != 2 or min(ref.shape) < SSIM_WINDOW:
        raise ConfigError(
            f"ssim needs a 2-D image of at least {SSIM_WINDOW} x {SSIM_WINDOW}, got shape {ref.shape}"
        )
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    mu_x = _filter_valid(ref, kernel)
    mu_y = _filter_valid(rec, kernel)
    var_x = _filter_valid(ref**2, kernel) - mu_x**2
    var_y = _filter_valid(rec**2, kernel) - mu_y**2
    cov = _filter_valid(ref * rec, kernel) - mu_x * mu_y
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    s = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / ((mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2))
    return float(s.mean())


@dataclass
class EvalReport:
    """Per-band and averaged scores for one (reference, reconstruction) pair."""

    psnr_db: list[float]
    ssim_score: list[float]
    mean_psnr_db: float
    mean_ssim: float
    data_range: float

    def to_csv(self) -> str:
        lines = ["band,psnr_db,ssim"]
        for i, (p, s) in enumerate(zip(self.psnr_db, self.ssim_score)):
            lines.append(f"{i},{p!r},{s!r}")
        lines.append(f"mean,{self.mean_psnr_db!r},{self.mean_ssim!r}")
        return "\n".join(lines) + "\n"


def evaluate_cube(ref: SpectralCube, rec: SpectralCube, data_range: float = 1.0) -> EvalReport:
    """Score a reconstruction band by band and average over bands."""
    if ref.shape != rec.shape:
        raise ShapeMismatchError(f"cube shape mismatch: {ref.shape} vs {rec.shape}")
    psnrs = [psnr(ref.data[lam], rec.data[lam], data_range) for lam in range(ref.bands)]
    ssims = [ssim(ref.data[lam], rec.data[lam], data_range) for lam in range(ref.bands)]
    return EvalReport(
        psnr_db=psnrs,
        ssim_score=ssims,
        mean_psnr_db=float(np.mean(psnrs)),
        mean_ssim=float(np.mean(ssims)),
        data_range=data_range,
    )
