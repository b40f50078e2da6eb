"""Learnable (2,1)-norm regularizers and their epsilon-smoothing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_core import (
    LayerStack,
    conv_forward,
    conv_input_vjp,
    load_stack,
    save_stack,
)


@dataclass(frozen=True)
class Regularizer:
    """r(y) = sum_i ||g_i(y)|| where g_i is the channel vector of the extractor output at position i.

    Inputs y are 2-D arrays (a single-channel image or sinogram).
    """

    extractor: LayerStack
    role: str = "image"

    def __post_init__(self):
        if self.extractor.in_channels != 1:
            raise ValueError("regularizer extractors take single-channel inputs")
        if self.role not in ("image", "sinogram"):
            raise ValueError(f"role must be 'image' or 'sinogram', got {self.role!r}")

    @property
    def channels(self) -> int:
        return self.extractor.out_channels

    def positions(self, shape) -> int:
        return int(np.prod(shape))

    def features(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.ndim != 2:
            raise ValueError(f"regularizer input must be 2-D, got shape {y.shape}")
        return conv_forward(self.extractor, y[None])

    def backward(self, y, cotangent) -> np.ndarray:
        return conv_input_vjp(self.extractor, np.asarray(y, dtype=np.float64)[None], cotangent)[0]


@dataclass(frozen=True)
class SmoothingState:
    epsilon: float
    norms: np.ndarray

    @property
    def I0(self) -> np.ndarray:
        return np.flatnonzero(self.norms.ravel() <= self.epsilon)

    @property
    def I1(self) -> np.ndarray:
        return np.flatnonzero(self.norms.ravel() > self.epsilon)


def _norms(g):
    return np.sqrt(np.sum(g * g, axis=0))


def _check_eps(eps):
    if not eps > 0:
        raise ValueError(f"smoothing epsilon must be positive, got {eps}")


def norm21(reg: Regularizer, y) -> float:
    return float(np.sum(_norms(reg.features(y))))


def _smoothed_terms(norms, eps):
    return np.where(norms <= eps, norms * norms / (2.0 * eps), norms - eps / 2.0)


def smoothed_value(reg: Regularizer, y, eps) -> tuple[float, SmoothingState]:
    _check_eps(eps)
    norms = _norms(reg.features(y))
    return float(np.sum(_smoothed_terms(norms, eps))), SmoothingState(eps, norms)


def _cotangent(g, norms, eps):
    return g / np.maximum(norms, eps)


def smoothed_grad(reg: Regularizer, y, eps) -> np.ndarray:
    _check_eps(eps)
    g = reg.features(y)
    return reg.backward(y, _cotangent(g, _norms(g), eps))


def smoothed_value_and_grad(reg: Regularizer, y, eps):
    _check_eps(eps)
    g = reg.features(y)
    norms = _norms(g)
    value = float(np.sum(_smoothed_terms(norms, eps)))
    return value, reg.backward(y, _cotangent(g, norms, eps))


# --- default extractors --------------------------------------------------

def finite_difference_extractor(weight=1.0, shape=(3, 3)) -> LayerStack:
    """Two-channel forward differences (along columns, along rows) in a single linear layer."""
    kh, kw = shape
    ch, cw = kh // 2, kw // 2
    k = np.zeros((2, 1, kh, kw))
    k[0, 0, ch, cw] = -weight
    k[0, 0, ch, cw + 1] = weight
    k[1, 0, ch, cw] = -weight
    k[1, 0, ch + 1, cw] = weight
    return LayerStack.from_kernels([k], final_linear=True)


def tv_regularizer(weight=1.0) -> Regularizer:
    """Isotropic total variation scaled by weight."""
    return Regularizer(finite_difference_extractor(weight, (3, 3)), "image")


def sinogram_regularizer(weight=1.0) -> Regularizer:
    """Angular/detector forward differences housed in a 3x7 kernel."""
    return Regularizer(finite_difference_extractor(weight, (3, 7)), "sinogram")


def random_extractor(rng, channels=(4, 3), kernel=(3, 3), scale=0.5, delta=1e-3) -> LayerStack:
    """Random multi-layer stack with smoothed-ReLU between layers."""
    kernels, cin = [], 1
    for cout in channels:
        fan_in = cin * kernel[0] * kernel[1]
        kernels.append(rng.standard_normal((cout, cin) + tuple(kernel)) * scale / np.sqrt(fan_in))
        cin = cout
    return LayerStack.from_kernels(kernels, final_linear=True, delta=delta)


def save_regularizer(reg: Regularizer, path) -> None:
    save_stack(reg.extractor, path, role=reg.role)


def load_regularizer(path) -> Regularizer:
    stack, meta = load_stack(path)
    return Regularizer(stack, meta.get("role", "image"))


# --- Lipschitz estimate --------------------------------------------------

def _is_linear(stack: LayerStack) -> bool:
    return len(stack.layers) == 1 and stack.final_linear


def _jvp(reg, y, v, h=1e-6):
    if _is_linear(reg.extractor):
        return reg.features(v)
    return (reg.features(y + h * v) - reg.features(y - h * v)) / (2 * h)


def _jacobian_norm(reg, y, rng, iters=30):
    v = rng.standard_normal(y.shape)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        w = reg.backward(y, _jvp(reg, y, v))
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        sigma = np.sqrt(nw)
        v = w / nw
    return float(sigma)


def _jacobian_difference_norm(reg, y1, y2, rng, iters=10):
    v = rng.standard_normal(y1.shape)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        d = _jvp(reg, y1, v) - _jvp(reg, y2, v)
        w = reg.backward(y1, d) - reg.backward(y2, d)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        sigma = np.sqrt(nw)
        v = w / nw
    return float(sigma)


@dataclass(frozen=True)
class LipschitzParts:
    """Sampled M (sup of Jacobian norm) and L_g (Lipschitz constant of the Jacobian)."""

    positions: int
    jac_norm: float
    jac_lipschitz: float

    def constant(self, eps: float) -> float:
        return np.sqrt(self.positions) * self.jac_lipschitz + self.jac_norm ** 2 / eps


def lipschitz_parts(reg: Regularizer, shape, samples=100, seed=0) -> LipschitzParts:
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    if _is_linear(reg.extractor):
        # constant Jacobian: one point determines M exactly and L_g vanishes
        y = np.zeros(shape)
        return LipschitzParts(int(np.prod(shape)), _jacobian_norm(reg, y, rng, iters=100), 0.0)
    m_hat, l_hat = 0.0, 0.0
    for _ in range(samples):
        y1 = rng.standard_normal(shape)
        y2 = y1 + 10.0 ** rng.uniform(-3, 0) * rng.standard_normal(shape)
        m_hat = max(m_hat, _jacobian_norm(reg, y1, rng, iters=10))
        l_hat = max(l_hat, _jacobian_difference_norm(reg, y1, y2, rng) / np.linalg.norm(y1 - y2))
    return LipschitzParts(int(np.prod(shape)), m_hat, l_hat)


def lipschitz_estimate(reg: Regularizer, eps, samples=100, shape=(8, 8), seed=0) -> float:
    """Sampled estimate of sqrt(m) L_g + M^2 / eps for the smoothed gradient."""
    _check_eps(eps)
    return float(lipschitz_parts(reg, shape, samples, seed).constant(eps))
