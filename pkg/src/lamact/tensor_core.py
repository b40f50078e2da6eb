"""Convolution stacks with smoothed-ReLU activations and their vector-Jacobian products.

Tensors are plain float64 numpy arrays laid out as (channels, height, width).
Convolutions are cross-correlations with stride 1 and zero same-padding, no bias.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_DELTA = 1e-3


def smoothed_relu(x, delta=DEFAULT_DELTA):
    """C1 piecewise-quadratic ReLU: 0 below -delta, x above delta, (x+delta)^2/(4 delta) between."""
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x >= delta, x, (x + delta) ** 2 / (4.0 * delta))
    out = np.where(x <= -delta, 0.0, out)
    return out[()] if out.ndim == 0 else out


def smoothed_relu_grad(x, delta=DEFAULT_DELTA):
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x >= delta, 1.0, (x + delta) / (2.0 * delta))
    out = np.where(x <= -delta, 0.0, out)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class ConvLayer:
    kernel: np.ndarray
    padding: tuple[int, int] | None = None
    smoothing_delta: float = DEFAULT_DELTA
    stride: int = 1

    def __post_init__(self):
        if self.stride != 1:
            raise ValueError(f"only stride 1 is supported, got {self.stride}")
        k = np.ascontiguousarray(self.kernel, dtype=np.float64)
        if k.ndim != 4:
            raise ValueError(f"kernel must be 4-D (out, in, kh, kw), got shape {k.shape}")
        kh, kw = k.shape[2:]
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"kernel spatial extents must be odd for same-padding, got {kh}x{kw}")
        pad = (kh // 2, kw // 2) if self.padding is None else tuple(int(p) for p in self.padding)
        if pad != (kh // 2, kw // 2):
            raise ValueError(f"padding {pad} does not preserve spatial extents for kernel {kh}x{kw}")
        if not self.smoothing_delta > 0:
            raise ValueError("smoothing_delta must be positive")
        if not np.all(np.isfinite(k)):
            raise ValueError("kernel contains non-finite values")
        k.setflags(write=False)
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "padding", pad)

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1]

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]


@dataclass(frozen=True)
class LayerStack:
    layers: tuple[ConvLayer, ...]
    final_linear: bool = True

    def __post_init__(self):
        layers = tuple(self.layers)
        if len(layers) < 1:
            raise ValueError("a LayerStack needs at least one layer")
        for i in range(1, len(layers)):
            if layers[i].in_channels != layers[i - 1].out_channels:
                raise ValueError(
                    f"layer {i} expects {layers[i].in_channels} input channels, "
                    f"layer {i - 1} produces {layers[i - 1].out_channels}"
                )
        object.__setattr__(self, "layers", layers)

    @classmethod
    def from_kernels(cls, kernels: Sequence[np.ndarray], final_linear=True, delta=DEFAULT_DELTA):
        return cls(tuple(ConvLayer(np.asarray(k), smoothing_delta=delta) for k in kernels), final_linear)

    @property
    def in_channels(self) -> int:
        return self.layers[0].in_channels

    @property
    def out_channels(self) -> int:
        return self.layers[-1].out_channels

    def kernels(self) -> list[np.ndarray]:
        return [layer.kernel for layer in self.layers]

    def with_kernels(self, kernels: Sequence[np.ndarray]) -> "LayerStack":
        return LayerStack(
            tuple(ConvLayer(np.asarray(k), layer.padding, layer.smoothing_delta) for k, layer in zip(kernels, self.layers)),
            self.final_linear,
        )

    def activated(self, index: int) -> bool:
        return not (self.final_linear and index == len(self.layers) - 1)


def _taps(kernel):
    # all-zero taps contribute nothing; finite-difference kernels are mostly zeros
    kh, kw = kernel.shape[2:]
    return [(a, b) for a in range(kh) for b in range(kw) if np.any(kernel[:, :, a, b])]


def _correlate(kernel, x):
    """Same-padded cross-correlation of x (C, H, W) with kernel (O, C, kh, kw)."""
    o, c, kh, kw = kernel.shape
    _, h, w = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    out = np.zeros((o, h, w))
    for a, b in _taps(kernel):
        out += np.tensordot(kernel[:, :, a, b], xp[:, a:a + h, b:b + w], axes=1)
    return out


def _correlate_transpose(kernel, cot):
    """Adjoint of _correlate with respect to its input."""
    o, c, kh, kw = kernel.shape
    _, h, w = cot.shape
    ph, pw = kh // 2, kw // 2
    gp = np.zeros((c, h + 2 * ph, w + 2 * pw))
    for a, b in _taps(kernel):
        gp[:, a:a + h, b:b + w] += np.tensordot(kernel[:, :, a, b].T, cot, axes=1)
    return gp[:, ph:ph + h, pw:pw + w]


def _correlate_weight_grad(kernel_shape, x, cot):
    """Gradient of <_correlate(K, x), cot> with respect to K."""
    o, c, kh, kw = kernel_shape
    _, h, w = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    grad = np.zeros(kernel_shape)
    for a in range(kh):
        for b in range(kw):
            grad[:, :, a, b] = np.tensordot(cot, xp[:, a:a + h, b:b + w], axes=([1, 2], [1, 2]))
    return grad


def _check_input(stack: LayerStack, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"input must be (channels, height, width), got shape {x.shape}")
    if x.shape[0] != stack.in_channels:
        raise ValueError(f"layer 0 expects {stack.in_channels} channels, input has {x.shape[0]}")
    if min(x.shape[1:]) < 1:
        raise ValueError("spatial extents must be positive")
    return x


def _forward_cache(stack: LayerStack, x):
    """Run the stack and keep (layer inputs, pre-activations)."""
    inputs, pre = [], []
    h = x
    for i, layer in enumerate(stack.layers):
        inputs.append(h)
        y = _correlate(layer.kernel, h)
        pre.append(y)
        h = smoothed_relu(y, layer.smoothing_delta) if stack.activated(i) else y
    return h, inputs, pre


def conv_forward(stack: LayerStack, x) -> np.ndarray:
    """Evaluate the feature extractor on a (C, H, W) input."""
    x = _check_input(stack, x)
    return _forward_cache(stack, x)[0]


def _check_cotangent(stack, x, cotangent):
    cot = np.asarray(cotangent, dtype=np.float64)
    expected = (stack.out_channels,) + x.shape[1:]
    if cot.shape != expected:
        raise ValueError(f"cotangent shape {cot.shape} does not match output shape {expected}")
    return cot


def _backward(stack, x, cotangent, want_weights):
    out, inputs, pre = _forward_cache(stack, x)
    g = cotangent
    weight_grads = [None] * len(stack.layers)
    for i in reversed(range(len(stack.layers))):
        layer = stack.layers[i]
        if stack.activated(i):
            g = g * smoothed_relu_grad(pre[i], layer.smoothing_delta)
        if want_weights:
            weight_grads[i] = _correlate_weight_grad(layer.kernel.shape, inputs[i], g)
        g = _correlate_transpose(layer.kernel, g)
    return g, weight_grads


def conv_input_vjp(stack: LayerStack, x, cotangent) -> np.ndarray:
    """Transpose-Jacobian action of the stack at x applied to cotangent."""
    x = _check_input(stack, x)
    cot = _check_cotangent(stack, x, cotangent)
    return _backward(stack, x, cot, want_weights=False)[0]


def conv_weight_vjp(stack: LayerStack, x, cotangent) -> list[np.ndarray]:
    """Per-layer kernel gradients of <conv_forward(stack, x), cotangent>."""
    x = _check_input(stack, x)
    cot = _check_cotangent(stack, x, cotangent)
    return _backward(stack, x, cot, want_weights=True)[1]


def conv_vjp(stack: LayerStack, x, cotangent):
    """Input and weight gradients from a single backward sweep."""
    x = _check_input(stack, x)
    cot = _check_cotangent(stack, x, cotangent)
    return _backward(stack, x, cot, want_weights=True)


# --- serialization -------------------------------------------------------

def stack_header(stack: LayerStack) -> dict:
    return {
        "final_linear": stack.final_linear,
        "layers": [
            {
                "shape": list(layer.kernel.shape),
                "padding": list(layer.padding),
                "delta": layer.smoothing_delta,
            }
            for layer in stack.layers
        ],
    }


def save_stack(stack: LayerStack, path, **meta) -> None:
    """Write <path>.json (header) and <path>.bin (little-endian float64 kernels in layer order)."""
    path = Path(path)
    header = stack_header(stack)
    header.update(meta)
    path.with_suffix(".json").write_text(json.dumps(header, indent=2))
    flat = np.concatenate([layer.kernel.ravel() for layer in stack.layers]).astype("<f8")
    path.with_suffix(".bin").write_bytes(flat.tobytes())


def load_stack(path) -> tuple[LayerStack, dict]:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    flat = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8").astype(np.float64)
    layers, pos = [], 0
    for spec in header["layers"]:
        shape = tuple(spec["shape"])
        size = int(np.prod(shape))
        if pos + size > flat.size:
            raise ValueError(f"{path}: kernel data shorter than header declares")
        layers.append(ConvLayer(flat[pos:pos + size].reshape(shape), tuple(spec["padding"]), spec["delta"]))
        pos += size
    if pos != flat.size:
        raise ValueError(f"{path}: {flat.size - pos} trailing values after declared kernels")
    meta = {k: v for k, v in header.items() if k not in ("layers", "final_linear")}
    return LayerStack(tuple(layers), bool(header["final_linear"])), meta
