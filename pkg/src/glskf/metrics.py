"""Completion quality metrics.

Pointwise metrics (MAE, RMSE, PSNR) are computed over whichever entries the
caller passes in, typically the unobserved cells only, since observed cells
are copied through and carry no information about fit quality. SSIM is a
windowed metric and therefore always works on full 2-D slices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

__all__ = ["mae_rmse", "psnr", "ssim", "EvalReport", "evaluate_completion"]


def mae_rmse(truth: np.ndarray, estimate: np.ndarray) -> tuple[float, float]:
    """Mean absolute error and root mean squared error over all entries given."""
    t = np.asarray(truth, dtype=np.float64).ravel()
    e = np.asarray(estimate, dtype=np.float64).ravel()
    if t.size != e.size:
        raise ValueError("truth and estimate sizes differ")
    if t.size == 0:
        raise ValueError("empty comparison set")
    d = t - e
    return float(np.mean(np.abs(d))), float(np.sqrt(np.mean(d * d)))


def psnr(truth: np.ndarray, estimate: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; infinity for an exact match."""
    t = np.asarray(truth, dtype=np.float64).ravel()
    e = np.asarray(estimate, dtype=np.float64).ravel()
    if t.size != e.size:
        raise ValueError("truth and estimate sizes differ")
    if t.size == 0:
        raise ValueError("empty comparison set")
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((t - e) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _windowed_mean(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable filter; cropping to interior windows makes the padding mode
    # irrelevant (only full windows survive)
    t = correlate1d(img, g, axis=0, mode="constant")
    t = correlate1d(t, g, axis=1, mode="constant")
    h = g.size // 2
    return t[h : img.shape[0] - h, h : img.shape[1] - h]


def ssim(
    truth: np.ndarray,
    estimate: np.ndarray,
    peak: float = 1.0,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Mean structural similarity over all fully interior Gaussian windows.

    Both inputs are 2-D slices on a common scale with dynamic range ``peak``
    (completed images live in [0, 1], so the default is 1). Identical inputs
    score exactly 1.
    """
    a = np.asarray(truth, dtype=np.float64)
    b = np.asarray(estimate, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("ssim expects 2-D slices")
    if a.shape != b.shape:
        raise ValueError("truth and estimate shapes differ")
    if min(a.shape) < window:
        raise ValueError(f"slice extents must be at least the window size ({window})")
    g = _gaussian_window(window, sigma)
    mu_a = _windowed_mean(a, g)
    mu_b = _windowed_mean(b, g)
    var_a = _windowed_mean(a * a, g) - mu_a * mu_a
    var_b = _windowed_mean(b * b, g) - mu_b * mu_b
    cov = _windowed_mean(a * b, g) - mu_a * mu_b
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class EvalReport:
    n_eval: int
    mae: float
    rmse: float
    psnr: float | None = None
    ssim: float | None = None
    psnr_slices: list[float] | None = None
    ssim_slices: list[float] | None = None

    def to_dict(self) -> dict:
        def clean(x):
            if x is None:
                return None
            if isinstance(x, list):
                return [clean(v) for v in x]
            return x if math.isfinite(x) else "inf"
        return {
            "n_eval": self.n_eval,
            "mae": self.mae,
            "rmse": self.rmse,
            "psnr": clean(self.psnr),
            "ssim": self.ssim,
            "psnr_slices": clean(self.psnr_slices),
            "ssim_slices": self.ssim_slices,
        }


def evaluate_completion(
    truth: np.ndarray,
    estimate: np.ndarray,
    mask,
    peak: float = 1.0,
    slice_axis: int | None = None,
) -> EvalReport:
    """Test-set evaluation of a completed tensor against the ground truth.

    MAE, RMSE and PSNR are restricted to the unobserved cells (the test set;
    observed cells are pinned to the data and would only dilute the numbers).
    With ``slice_axis`` given, PSNR is computed per slice along that axis over
    each slice's unobserved cells and averaged. SSIM, being windowed, is
    computed on full 2-D slices spanned by the first two modes, averaged over
    all trailing indices, and is skipped when those extents are too small.
    """
    truth = np.asarray(truth, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if truth.shape != estimate.shape or truth.shape != mask.shape:
        raise ValueError("truth, estimate and mask shapes must all agree")
    if slice_axis is not None and not 0 <= slice_axis < truth.ndim:
        raise ValueError(f"slice_axis {slice_axis} out of range for a {truth.ndim}-way tensor")
    holdout = ~mask.indicator
    n_eval = int(holdout.sum())
    if n_eval == 0:
        raise ValueError("mask has no unobserved cells: nothing to evaluate")
    mae, rmse = mae_rmse(truth[holdout], estimate[holdout])

    psnr_slices = None
    if slice_axis is None:
        p = psnr(truth[holdout], estimate[holdout], peak=peak)
    else:
        psnr_slices = []
        for i in range(truth.shape[slice_axis]):
            sl = [slice(None)] * truth.ndim
            sl[slice_axis] = i
            sl = tuple(sl)
            hs = holdout[sl]
            if not hs.any():
                continue
            psnr_slices.append(psnr(truth[sl][hs], estimate[sl][hs], peak=peak))
        if not psnr_slices:
            raise ValueError("no slice along the given axis has unobserved cells")
        p = float(np.mean(psnr_slices))

    s = None
    ssim_slices = None
    if truth.ndim >= 2 and min(truth.shape[:2]) >= 11:
        ssim_slices = []
        for rest in np.ndindex(truth.shape[2:]):
            sl = (slice(None), slice(None)) + rest
            ssim_slices.append(ssim(truth[sl], estimate[sl], peak=peak))
        s = float(np.mean(ssim_slices))

    return EvalReport(
        n_eval=n_eval, mae=mae, rmse=rmse, psnr=p, ssim=s,
        psnr_slices=psnr_slices, ssim_slices=ssim_slices,
    )
