"""Image and mask quality metrics over [0, 1] float images."""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d

from gslift.errors import PreconditionError

PSNR_CAP = 99.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2

_LUMA = np.array([0.299, 0.587, 0.114])


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared error over all pixels and channels."""
    a, b = _as_pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images, capped at 99.

    Identical images return the cap rather than infinity.
    """
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(1.0 / err), PSNR_CAP))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Color images are converted to luma first; statistics are computed on
    valid windows only (no padded borders). Images smaller than the window
    raise :class:`PreconditionError`.
    """
    a, b = _as_pair(a, b)
    a, b = _to_gray(a), _to_gray(b)
    h, w = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise PreconditionError(
            f"image {w}x{h} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    kernel = _gaussian_taps()

    def filt(img: np.ndarray) -> np.ndarray:
        tmp = convolve2d(img, kernel[None, :], mode="valid")
        return convolve2d(tmp, kernel[:, None], mode="valid")

    ua, ub = filt(a), filt(b)
    uaa, ubb, uab = filt(a * a), filt(b * b), filt(a * b)
    va = uaa - ua * ua
    vb = ubb - ub * ub
    cov = uab - ua * ub
    num = (2.0 * ua * ub + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (ua * ua + ub * ub + SSIM_C1) * (va + vb + SSIM_C2)
    return float(np.mean(num / den))


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks (1.0 for two empties)."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise PreconditionError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return float(np.count_nonzero(a & b)) / union


def match_masks_by_iou(gt_mask: np.ndarray, candidates: list):
    """Best-matching candidate mask for a ground-truth mask.

    Returns (index, iou); (None, 0.0) when there are no candidates. Ties
    keep the earliest candidate.
    """
    best_idx, best_iou = None, 0.0
    for i, cand in enumerate(candidates):
        value = iou(gt_mask, cand)
        if best_idx is None or value > best_iou:
            best_idx, best_iou = i, value
    if best_idx is None:
        return None, 0.0
    return best_idx, best_iou


def mean_iou(values) -> float:
    """Mean of per-instance IoU values; refuses an empty collection."""
    values = np.asarray(list(values), dtype=np.float64)
    if values.size == 0:
        raise PreconditionError("mean IoU over an empty instance list is undefined")
    return float(values.mean())


def _as_pair(a: np.ndarray, b: np.ndarray):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise PreconditionError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise PreconditionError("images are empty")
    return a, b


def _to_gray(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ _LUMA
    raise PreconditionError(f"expected HxW or HxWx3 image, got shape {img.shape}")


def _gaussian_taps() -> np.ndarray:
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    taps = np.exp(-(x**2) / (2.0 * SSIM_SIGMA**2))
    return taps / taps.sum()
