"""Image quality metrics against a reference image."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d


def _pair(x, ref):
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs reference {ref.shape}")
    return x, ref


def rmse(x, ref) -> float:
    x, ref = _pair(x, ref)
    return float(np.sqrt(np.mean((x - ref) ** 2)))


def psnr(x, ref, peak=None) -> float:
    """10 log10(peak^2 / MSE); peak defaults to the dynamic range of ref."""
    x, ref = _pair(x, ref)
    if peak is None:
        peak = float(ref.max() - ref.min())
    if not peak > 0:
        raise ValueError("peak must be positive (constant reference needs an explicit peak)")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))


def gaussian_window(size=11, sigma=1.5) -> np.ndarray:
    t = np.arange(size) - (size - 1) / 2
    w = np.exp(-t * t / (2 * sigma * sigma))
    return w / w.sum()


def _filter_valid(img, w):
    out = correlate1d(img, w, axis=0, mode="constant")
    out = correlate1d(out, w, axis=1, mode="constant")
    r = len(w) // 2
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim(x, ref, peak=None, size=11, sigma=1.5) -> float:
    """Mean SSIM over window positions fully inside the image (Gaussian 11x11, sigma 1.5)."""
    x, ref = _pair(x, ref)
    if x.ndim != 2 or min(x.shape) < size:
        raise ValueError(f"ssim needs 2-D images of at least {size}x{size}, got {x.shape}")
    if peak is None:
        peak = float(ref.max() - ref.min())
    if not peak > 0:
        raise ValueError("peak must be positive (constant reference needs an explicit peak)")
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    w = gaussian_window(size, sigma)
    mx, my = _filter_valid(x, w), _filter_valid(ref, w)
    sxx = _filter_valid(x * x, w) - mx * mx
    syy = _filter_valid(ref * ref, w) - my * my
    sxy = _filter_valid(x * ref, w) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))
