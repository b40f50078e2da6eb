"""Sinogram completion by a view-advance map and the resulting initial (sinogram, image) pair.

A sparse sinogram s_0 holds rows 0, p, 2p, ... of the full sinogram.  s_i denotes rows
i, p + i, 2p + i, ...; the advance map estimates s_{i+1} from s_i.  The row following the
last view (angle pi) is the conjugate of view 0: s(theta + pi, t) = s(theta, -t), i.e. view 0
reversed in detector index.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor_core import LayerStack, conv_forward, conv_vjp, load_stack, save_stack
from .tomography import Geometry, fbp

log = logging.getLogger(__name__)

KINDS = ("interpolation", "convolutional")


@dataclass(frozen=True)
class ViewAdvanceMap:
    kind: str
    rate: int
    geometry: Geometry
    blocks: tuple[LayerStack, ...] = ()
    skip: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.rate < 1 or self.geometry.n_views % self.rate:
            raise ValueError(f"rate {self.rate} does not divide n_views {self.geometry.n_views}")
        blocks = tuple(self.blocks)
        if self.kind == "convolutional":
            if not blocks:
                raise ValueError("a convolutional map needs at least one block")
            for i, b in enumerate(blocks):
                if b.in_channels != 1 or b.out_channels != 1:
                    raise ValueError(f"block {i} must map 1 channel to 1 channel")
        elif blocks:
            raise ValueError("an interpolation map has no blocks")
        object.__setattr__(self, "blocks", blocks)

    @property
    def sparse_shape(self) -> tuple[int, int]:
        return (self.geometry.n_views // self.rate, self.geometry.n_detectors)

    def with_blocks(self, blocks) -> "ViewAdvanceMap":
        return ViewAdvanceMap(self.kind, self.rate, self.geometry, tuple(blocks), self.skip)


def interpolation_map(geom: Geometry, rate: int) -> ViewAdvanceMap:
    return ViewAdvanceMap("interpolation", rate, geom)


def convolutional_map(geom: Geometry, rate: int, n_blocks=1, hidden=4, kernel=(3, 7),
                      rng=None, scale=0.1, skip=True, delta=1e-3) -> ViewAdvanceMap:
    """Blocks of two conv layers (1 -> hidden -> 1) with smoothed-ReLU between, each with an additive skip."""
    rng = np.random.default_rng(0) if rng is None else rng
    kh, kw = kernel
    blocks = []
    for _ in range(n_blocks):
        k1 = rng.standard_normal((hidden, 1, kh, kw)) * scale / np.sqrt(kh * kw)
        k2 = rng.standard_normal((1, hidden, kh, kw)) * scale / np.sqrt(hidden * kh * kw)
        blocks.append(LayerStack.from_kernels([k1, k2], final_linear=True, delta=delta))
    return ViewAdvanceMap("convolutional", rate, geom, tuple(blocks), skip)


def linear_map(geom: Geometry, rate: int, kernel) -> ViewAdvanceMap:
    """A single linear conv layer without skip connection."""
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim == 2:
        k = k[None, None]
    return ViewAdvanceMap("convolutional", rate, geom, (LayerStack.from_kernels([k]),), skip=False)


def conjugate_row(row) -> np.ndarray:
    return np.asarray(row)[..., ::-1]


def wrap_shift(s) -> np.ndarray:
    """Rows advanced by one sparse step: [s^2, ..., s^V, conj(s^1)]."""
    s = np.asarray(s, dtype=np.float64)
    return np.concatenate([s[1:], conjugate_row(s[:1])], axis=0)


def _check_sparse(m: ViewAdvanceMap, s):
    s = np.asarray(s, dtype=np.float64)
    if s.shape != m.sparse_shape:
        raise ValueError(f"sinogram shape {s.shape} does not match sparse shape {m.sparse_shape}")
    return s


def _conv_apply(m: ViewAdvanceMap, s):
    h = s[None]
    for b in m.blocks:
        out = conv_forward(b, h)
        h = h + out if m.skip else out
    return h[0]


def advance(m: ViewAdvanceMap, s) -> np.ndarray:
    """Estimate the sparse sinogram rotated forward by one full-view angular step."""
    if m.rate == 1:
        raise ValueError("advance needs rate >= 2; with full views there is nothing to advance")
    s = _check_sparse(m, s)
    if m.kind == "interpolation":
        w = 1.0 / m.rate
        return (1.0 - w) * s + w * wrap_shift(s)
    return _conv_apply(m, s)


def complete_sinogram(m: ViewAdvanceMap, s0, p: int) -> np.ndarray:
    """Interleave s0, advance(s0), ..., advance^(p-1)(s0) into a full-view sinogram."""
    if p != m.rate:
        raise ValueError(f"rate {p} does not match the map's rate {m.rate}")
    s = _check_sparse(m, s0)
    out = np.empty(m.geometry.sino_shape)
    out[0::p] = s
    for i in range(1, p):
        s = advance(m, s)
        out[i::p] = s
    return out


def init_pair(m: ViewAdvanceMap, s0, p: int, geom: Geometry, window=None):
    """(z_init, x_init) = (completed sinogram, its FBP)."""
    if geom != m.geometry:
        raise ValueError("geometry does not match the map's geometry")
    z = complete_sinogram(m, s0, p)
    return z, fbp(z, geom, window)


# --- training --------------------------------------------------------------

def training_pairs(sinograms, p: int, include_wrap=True):
    """(input, target) pairs s_{i-1} -> s_i from full sinograms; the i = p target is wrap_shift(s_0)."""
    pairs = []
    for s in sinograms:
        s = np.asarray(s, dtype=np.float64)
        if s.shape[0] % p:
            raise ValueError(f"rate {p} does not divide {s.shape[0]} views")
        subs = [s[i::p] for i in range(p)]
        for i in range(1, p):
            pairs.append((subs[i - 1], subs[i]))
        if include_wrap:
            pairs.append((subs[p - 1], wrap_shift(subs[0])))
    return pairs


def _forward_blocks(m, s):
    hs = [s[None]]
    for b in m.blocks:
        out = conv_forward(b, hs[-1])
        hs.append(hs[-1] + out if m.skip else out)
    return hs


def advance_loss_and_grad(m: ViewAdvanceMap, pairs):
    """Mean squared advance error over pairs and its kernel gradients, block by block."""
    if not pairs:
        raise ValueError("empty training set")
    n = len(pairs)
    loss = 0.0
    grads = [[np.zeros_like(k) for k in b.kernels()] for b in m.blocks]
    for s_in, s_out in pairs:
        hs = _forward_blocks(m, s_in)
        r = hs[-1] - s_out[None]
        loss += float(np.vdot(r, r)) / n
        g = 2.0 * r / n
        for bi in reversed(range(len(m.blocks))):
            gin, gw = conv_vjp(m.blocks[bi], hs[bi], g)
            for acc, w in zip(grads[bi], gw):
                acc += w
            g = g + gin if m.skip else gin
    return loss, grads


def train_advance(m: ViewAdvanceMap, dataset, p: int, epochs: int, step_size: float, include_wrap=True):
    """Full-batch gradient descent on the mean advance error; returns (trained map, loss curve).

    The loss curve holds the loss before each step plus the final loss (epochs + 1 values).
    """
    if m.kind != "convolutional":
        raise ValueError("only convolutional maps are trainable")
    if p != m.rate:
        raise ValueError(f"rate {p} does not match the map's rate {m.rate}")
    if not step_size > 0:
        raise ValueError("step_size must be positive")
    dataset = list(dataset)
    if not dataset:
        raise ValueError("empty dataset")
    pairs = training_pairs(dataset, p, include_wrap)
    curve = []
    for epoch in range(epochs):
        loss, grads = advance_loss_and_grad(m, pairs)
        curve.append(loss)
        if not np.isfinite(loss):
            raise FloatingPointError(f"training diverged at epoch {epoch}; reduce step_size")
        m = m.with_blocks(
            b.with_kernels([k - step_size * g for k, g in zip(b.kernels(), gb)])
            for b, gb in zip(m.blocks, grads)
        )
        if epoch % 50 == 0:
            log.debug("epoch %d loss %.6e", epoch, loss)
    curve.append(advance_loss_and_grad(m, pairs)[0])
    return m, curve


def linear_step_size(pairs, kernel_shape) -> float:
    """1/L for a single linear layer, L = 2 * (largest eigenvalue of the mean patch Gram matrix)."""
    kh, kw = kernel_shape
    gram = np.zeros((kh * kw, kh * kw))
    for s_in, _ in pairs:
        xp = np.pad(s_in, ((kh // 2,) * 2, (kw // 2,) * 2))
        h, w = s_in.shape
        cols = np.stack([xp[a:a + h, b:b + w].ravel() for a in range(kh) for b in range(kw)])
        gram += cols @ cols.T
    return 1.0 / (2.0 * np.linalg.eigvalsh(gram / len(pairs))[-1])


# --- serialization ---------------------------------------------------------

def save_map(m: ViewAdvanceMap, path) -> None:
    meta = {"kind": m.kind, "rate": m.rate, "geometry": m.geometry.to_dict(), "skip": m.skip}
    if m.kind == "interpolation":
        Path(path).with_suffix(".json").write_text(json.dumps(meta, indent=2))
        return
    layers = tuple(layer for b in m.blocks for layer in b.layers)
    meta["block_sizes"] = [len(b.layers) for b in m.blocks]
    meta["block_final_linear"] = [b.final_linear for b in m.blocks]
    save_stack(LayerStack(layers, True), path, **meta)


def load_map(path) -> ViewAdvanceMap:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    geom = Geometry(**header["geometry"])
    if header["kind"] == "interpolation":
        return interpolation_map(geom, header["rate"])
    stack, meta = load_stack(path)
    blocks, pos = [], 0
    for size, final_linear in zip(meta["block_sizes"], meta["block_final_linear"]):
        blocks.append(LayerStack(stack.layers[pos:pos + size], final_linear))
        pos += size
    return ViewAdvanceMap("convolutional", meta["rate"], geom, tuple(blocks), meta["skip"])


def write_loss_curve(curve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("step", "loss"))
        for i, v in enumerate(curve):
            w.writerow((i, repr(float(v))))
