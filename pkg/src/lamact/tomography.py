"""Parallel-beam tomography: Joseph projector, its exact adjoint, FBP, view selection, phantoms.

Image pixel (r, c) sits at x = c - (n-1)/2, y = (n-1)/2 - r (unit pitch).  A ray of view
angle theta and detector offset t is the line x cos(theta) + y sin(theta) = t.  Detector k
has offset t_k = (k - (D-1)/2) * spacing, so t_{D-1-k} = -t_k.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Geometry:
    image_size: int
    n_views: int
    n_detectors: int
    detector_spacing: float = 1.0

    def __post_init__(self):
        for name in ("image_size", "n_views", "n_detectors"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not self.detector_spacing > 0:
            raise ValueError("detector_spacing must be positive")

    @property
    def angles(self) -> np.ndarray:
        return np.pi * np.arange(self.n_views) / self.n_views

    @property
    def detector_offsets(self) -> np.ndarray:
        return (np.arange(self.n_detectors) - (self.n_detectors - 1) / 2) * self.detector_spacing

    @property
    def sino_shape(self) -> tuple[int, int]:
        return (self.n_views, self.n_detectors)

    @property
    def image_shape(self) -> tuple[int, int]:
        return (self.image_size, self.image_size)

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "n_views": self.n_views,
            "n_detectors": self.n_detectors,
            "detector_spacing": self.detector_spacing,
        }


@dataclass(frozen=True)
class ViewSelector:
    rate: int
    offset: int = 0

    def __post_init__(self):
        if self.rate < 1:
            raise ValueError("rate must be a positive integer")
        if not 0 <= self.offset < self.rate:
            raise ValueError(f"offset must lie in [0, {self.rate}), got {self.offset}")

    def indices(self, n_views: int) -> np.ndarray:
        if n_views % self.rate:
            raise ValueError(f"rate {self.rate} does not divide n_views {n_views}")
        return np.arange(self.offset, n_views, self.rate)


# --- system matrices -----------------------------------------------------

@functools.lru_cache(maxsize=8)
def _joseph_matrix(geom: Geometry):
    """Sparse (V*D, n*n) Joseph line-integration matrix, plus its CSR transpose."""
    n, D = geom.image_size, geom.n_detectors
    c = (n - 1) / 2
    t = geom.detector_offsets
    steps = np.arange(n)
    rows, cols, vals = [], [], []
    for v, theta in enumerate(geom.angles):
        cos, sin = np.cos(theta), np.sin(theta)
        ray = v * D + np.repeat(np.arange(D), n)
        if abs(cos) >= abs(sin):
            # march over image rows, interpolate along columns
            y = c - steps
            pos = (t[:, None] - y[None, :] * sin) / cos + c
            fixed = np.broadcast_to(steps, (D, n)).ravel()
            length = 1.0 / abs(cos)
            along_rows = True
        else:
            x = steps - c
            pos = c - (t[:, None] - x[None, :] * cos) / sin
            fixed = np.broadcast_to(steps, (D, n)).ravel()
            length = 1.0 / abs(sin)
            along_rows = False
        pos = pos.ravel()
        lo = np.floor(pos).astype(np.int64)
        frac = pos - lo
        for idx, weight in ((lo, 1.0 - frac), (lo + 1, frac)):
            keep = (idx >= 0) & (idx < n) & (weight > 0)
            pix = fixed[keep] * n + idx[keep] if along_rows else idx[keep] * n + fixed[keep]
            rows.append(ray[keep])
            cols.append(pix)
            vals.append(weight[keep] * length)
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(geom.n_views * D, n * n),
    )
    mat.sum_duplicates()
    return mat, mat.T.tocsr()


@functools.lru_cache(maxsize=8)
def _pixel_backprojector(geom: Geometry):
    """Sparse (n*n, V*D) pixel-driven linear-interpolation backprojector used by FBP."""
    n, D = geom.image_size, geom.n_detectors
    c = (n - 1) / 2
    r, col = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    x = (col - c).ravel()
    y = (c - r).ravel()
    pix = np.arange(n * n)
    rows, cols, vals = [], [], []
    for v, theta in enumerate(geom.angles):
        pos = (x * np.cos(theta) + y * np.sin(theta)) / geom.detector_spacing + (D - 1) / 2
        lo = np.floor(pos).astype(np.int64)
        frac = pos - lo
        for idx, weight in ((lo, 1.0 - frac), (lo + 1, frac)):
            keep = (idx >= 0) & (idx < D) & (weight > 0)
            rows.append(pix[keep])
            cols.append(v * D + idx[keep])
            vals.append(weight[keep])
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n * n, geom.n_views * D),
    )
    mat.sum_duplicates()
    return mat


def _check_image(image, geom):
    image = np.asarray(image, dtype=np.float64)
    if image.shape != geom.image_shape:
        raise ValueError(f"image shape {image.shape} does not match geometry {geom.image_shape}")
    return image


def _check_sino(sino, geom):
    sino = np.asarray(sino, dtype=np.float64)
    if sino.shape != geom.sino_shape:
        raise ValueError(f"sinogram shape {sino.shape} does not match geometry {geom.sino_shape}")
    return sino


def project(image, geom: Geometry) -> np.ndarray:
    """Discrete Radon transform, shape (n_views, n_detectors)."""
    image = _check_image(image, geom)
    mat, _ = _joseph_matrix(geom)
    return (mat @ image.ravel()).reshape(geom.sino_shape)


def backproject(sino, geom: Geometry) -> np.ndarray:
    """Exact adjoint of project."""
    sino = _check_sino(sino, geom)
    _, mat_t = _joseph_matrix(geom)
    return (mat_t @ sino.ravel()).reshape(geom.image_shape)


def operator_norm_sq(geom: Geometry, iters=100, seed=0) -> float:
    """Largest eigenvalue of A^T A by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(geom.image_size ** 2)
    mat, mat_t = _joseph_matrix(geom)
    lam = 0.0
    for _ in range(iters):
        w = mat_t @ (mat @ v)
        lam = float(np.linalg.norm(w))
        v = w / lam
    return lam


def ramp_filter(sino, spacing=1.0, window=None) -> np.ndarray:
    """Ram-Lak filtering of each row in the frequency domain with zero-padding to a power of two."""
    sino = np.asarray(sino, dtype=np.float64)
    D = sino.shape[-1]
    size = max(64, 1 << int(np.ceil(np.log2(2 * D))))
    k = np.arange(size)
    k = np.where(k < size // 2, k, k - size)
    h = np.zeros(size)
    h[0] = 0.25
    odd = k % 2 == 1
    h[odd] = -1.0 / (np.pi * k[odd]) ** 2
    response = np.real(np.fft.fft(h)) / spacing
    if window == "hann":
        freq = np.abs(np.fft.fftfreq(size))
        response = response * (0.5 + 0.5 * np.cos(2 * np.pi * freq))
    elif window is not None:
        raise ValueError(f"unknown window {window!r}")
    padded = np.zeros(sino.shape[:-1] + (size,))
    padded[..., :D] = sino
    return np.real(np.fft.ifft(np.fft.fft(padded, axis=-1) * response, axis=-1))[..., :D]


def fbp(sino, geom: Geometry, window=None) -> np.ndarray:
    """Filtered backprojection over all views of geom."""
    sino = _check_sino(sino, geom)
    filtered = ramp_filter(sino, geom.detector_spacing, window)
    bp = _pixel_backprojector(geom)
    return (bp @ filtered.ravel()).reshape(geom.image_shape) * (np.pi / geom.n_views)


def sparse_fbp(s0, geom: Geometry, sel: ViewSelector, window=None) -> np.ndarray:
    """FBP using only the acquired views (weights pi / n_acquired)."""
    return sel.rate * fbp(embed_views(s0, sel, geom.n_views), geom, window)


def select_views(sino, sel: ViewSelector) -> np.ndarray:
    sino = np.asarray(sino, dtype=np.float64)
    return sino[sel.indices(sino.shape[0])].copy()


def embed_views(sub, sel: ViewSelector, n_views: int) -> np.ndarray:
    """Transpose of select_views: place rows back into a zero sinogram."""
    sub = np.asarray(sub, dtype=np.float64)
    idx = sel.indices(n_views)
    if sub.shape[0] != idx.size:
        raise ValueError(f"sub-sinogram has {sub.shape[0]} rows, selector expects {idx.size}")
    out = np.zeros((n_views,) + sub.shape[1:])
    out[idx] = sub
    return out


# --- phantoms ------------------------------------------------------------

# (intensity, semi-axis a, semi-axis b, x0, y0, angle in degrees); modified Shepp-Logan
SHEPP_LOGAN_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


def ellipse_phantom(n: int, ellipses) -> np.ndarray:
    """Sum of constant-intensity ellipses on [-1, 1]^2 sampled at pixel centers."""
    coords = (np.arange(n) - (n - 1) / 2) / (n / 2)
    xx, yy = np.meshgrid(coords, -coords)
    img = np.zeros((n, n))
    for amp, a, b, x0, y0, phi in ellipses:
        phi = np.deg2rad(phi)
        dx, dy = xx - x0, yy - y0
        u = dx * np.cos(phi) + dy * np.sin(phi)
        v = -dx * np.sin(phi) + dy * np.cos(phi)
        img[(u / a) ** 2 + (v / b) ** 2 <= 1.0] += amp
    return img


def shepp_logan(n: int) -> np.ndarray:
    if n < 16:
        raise ValueError(f"phantom size must be at least 16, got {n}")
    return np.clip(ellipse_phantom(n, SHEPP_LOGAN_ELLIPSES), 0.0, 1.0)


def random_ellipses_phantom(n: int, rng: np.random.Generator, count=6) -> np.ndarray:
    """Random ellipse phantom inside the unit disk, values clipped to [0, 1]."""
    ellipses = [(0.8, 0.7, 0.85, 0.0, 0.0, rng.uniform(-20, 20))]
    for _ in range(count):
        r = rng.uniform(0, 0.45)
        ang = rng.uniform(0, 2 * np.pi)
        ellipses.append((
            rng.uniform(-0.4, 0.4),
            rng.uniform(0.05, 0.25),
            rng.uniform(0.05, 0.25),
            r * np.cos(ang),
            r * np.sin(ang),
            rng.uniform(0, 180),
        ))
    return np.clip(ellipse_phantom(n, ellipses), 0.0, 1.0)
