import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import rel_err
from lamact.tensor_core import (
    ConvLayer,
    LayerStack,
    conv_forward,
    conv_input_vjp,
    conv_vjp,
    conv_weight_vjp,
    load_stack,
    save_stack,
    smoothed_relu,
    smoothed_relu_grad,
)


def naive_correlate(kernel, x):
    o, c, kh, kw = kernel.shape
    _, h, w = x.shape
    out = np.zeros((o, h, w))
    for oo in range(o):
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for cc in range(c):
                    for a in range(kh):
                        for b in range(kw):
                            ii, jj = i + a - kh // 2, j + b - kw // 2
                            if 0 <= ii < h and 0 <= jj < w:
                                acc += kernel[oo, cc, a, b] * x[cc, ii, jj]
                out[oo, i, j] = acc
    return out


def random_stack(rng, channels=(3, 2), kernel=(3, 3), cin=1, final_linear=True):
    kernels = []
    for cout in channels:
        kernels.append(rng.standard_normal((cout, cin) + kernel) * 0.5)
        cin = cout
    return LayerStack.from_kernels(kernels, final_linear=final_linear)


# --- smoothed ReLU ------------------------------------------------------------

def test_srelu_branch_points():
    d = 1e-3
    assert smoothed_relu(-d, d) == 0.0
    assert smoothed_relu(d, d) == d
    assert smoothed_relu(0.0, d) == pytest.approx(0.00025, abs=1e-18)


def test_srelu_derivative_continuity():
    d = 1e-3
    assert smoothed_relu_grad(0.0, d) == 0.5
    assert smoothed_relu_grad(-d, d) == 0.0
    assert smoothed_relu_grad(d, d) == 1.0
    # inner branch evaluated at the band edges agrees with the outer slopes
    assert (-d + d) / (2 * d) == 0.0 and (d + d) / (2 * d) == 1.0


def test_srelu_rejects_nonpositive_delta():
    with pytest.raises(ValueError):
        smoothed_relu(0.0, 0.0)
    with pytest.raises(ValueError):
        smoothed_relu_grad(0.0, -1.0)


@given(st.floats(-10, 10), st.floats(1e-6, 1.0))
def test_srelu_bounds_relu(x, d):
    a = smoothed_relu(x, d)
    assert 0.0 <= a - max(x, 0.0) <= d / 4 + 1e-15


@given(st.floats(-1, 1), st.floats(0, 1), st.floats(1e-4, 0.5))
def test_srelu_monotone(x, step, d):
    assert smoothed_relu(x + step, d) >= smoothed_relu(x, d)


@given(st.floats(-0.01, 0.01))
def test_srelu_grad_matches_fd(x):
    d, h = 1e-3, 1e-9
    if min(abs(x - d), abs(x + d)) < 1e-7:
        return
    fd = (smoothed_relu(x + h, d) - smoothed_relu(x - h, d)) / (2 * h)
    assert fd == pytest.approx(smoothed_relu_grad(x, d), abs=1e-5)


# --- construction -------------------------------------------------------------

def test_layer_rejects_even_kernel():
    with pytest.raises(ValueError, match="odd"):
        ConvLayer(np.zeros((1, 1, 2, 3)))


def test_layer_rejects_stride_and_padding():
    with pytest.raises(ValueError, match="stride"):
        ConvLayer(np.zeros((1, 1, 3, 3)), stride=2)
    with pytest.raises(ValueError, match="padding"):
        ConvLayer(np.zeros((1, 1, 3, 3)), padding=(0, 0))


def test_layer_kernel_is_read_only():
    layer = ConvLayer(np.ones((1, 1, 3, 3)))
    with pytest.raises(ValueError):
        layer.kernel[0, 0, 0, 0] = 2.0


def test_stack_channel_mismatch_names_layer():
    with pytest.raises(ValueError, match="layer 1"):
        LayerStack.from_kernels([np.zeros((3, 1, 3, 3)), np.zeros((2, 4, 3, 3))])


def test_input_channel_mismatch_names_layer(rng):
    stack = random_stack(rng)
    with pytest.raises(ValueError, match="layer 0"):
        conv_forward(stack, np.zeros((2, 5, 5)))


def test_cotangent_shape_checked(rng):
    stack = random_stack(rng)
    with pytest.raises(ValueError, match="cotangent"):
        conv_input_vjp(stack, np.zeros((1, 5, 5)), np.zeros((1, 5, 5)))


# --- forward ------------------------------------------------------------------

def test_zero_kernels_zero_output():
    stack = LayerStack.from_kernels([np.zeros((2, 1, 3, 3)), np.zeros((1, 2, 3, 3))], final_linear=False)
    out = conv_forward(stack, np.zeros((1, 6, 6)))
    # the smoothed ReLU of zero is delta/4, so a non-final activation shifts the zero output
    assert np.all(out == smoothed_relu(0.0))
    stack = LayerStack.from_kernels([np.zeros((2, 1, 3, 3)), np.zeros((1, 2, 3, 3))])
    assert np.all(conv_forward(stack, np.zeros((1, 6, 6))) == 0.0)


def test_identity_kernel(rng):
    t = rng.standard_normal((1, 4, 5))
    k = np.ones((1, 1, 1, 1))
    assert np.array_equal(conv_forward(LayerStack.from_kernels([k]), t), t)
    activated = conv_forward(LayerStack.from_kernels([k], final_linear=False), t)
    assert np.array_equal(activated, smoothed_relu(t))


def test_two_layer_matches_naive_oracle(rng):
    stack = random_stack(rng, channels=(3, 2), kernel=(3, 5))
    x = rng.standard_normal((1, 8, 8))
    h = smoothed_relu(naive_correlate(stack.layers[0].kernel, x))
    expected = naive_correlate(stack.layers[1].kernel, h)
    assert np.max(np.abs(conv_forward(stack, x) - expected)) <= 1e-12


@given(st.integers(1, 9), st.integers(1, 9), st.sampled_from([(1, 1), (3, 3), (3, 7), (5, 1)]))
def test_same_padding_preserves_extent(h, w, kernel):
    rng = np.random.default_rng(h * 10 + w)
    stack = random_stack(rng, channels=(2, 3), kernel=kernel)
    assert conv_forward(stack, rng.standard_normal((1, h, w))).shape == (3, h, w)


def test_forward_deterministic(rng):
    stack = random_stack(rng)
    x = rng.standard_normal((1, 7, 7))
    assert np.array_equal(conv_forward(stack, x), conv_forward(stack, x))


# --- vector-Jacobian products -------------------------------------------------

def test_zero_cotangent_zero_gradient(rng):
    stack = random_stack(rng)
    x = rng.standard_normal((1, 6, 6))
    assert np.all(conv_input_vjp(stack, x, np.zeros((2, 6, 6))) == 0)
    assert all(np.all(g == 0) for g in conv_weight_vjp(stack, x, np.zeros((2, 6, 6))))


def test_linear_vjp_is_transposed_correlation(rng):
    k = rng.standard_normal((2, 1, 3, 3))
    stack = LayerStack.from_kernels([k])
    x = rng.standard_normal((1, 6, 7))
    v = rng.standard_normal((2, 6, 7))
    # transposed correlation = correlation with the flipped, channel-swapped kernel
    flipped = np.transpose(k[:, :, ::-1, ::-1], (1, 0, 2, 3))
    assert np.max(np.abs(conv_input_vjp(stack, x, v) - naive_correlate(flipped, v))) <= 1e-12


def test_linear_weight_grad_is_correlation(rng):
    k = rng.standard_normal((2, 1, 3, 3))
    stack = LayerStack.from_kernels([k])
    x = rng.standard_normal((1, 6, 6))
    v = rng.standard_normal((2, 6, 6))
    grad = conv_weight_vjp(stack, x, v)[0]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    for o in range(2):
        for a in range(3):
            for b in range(3):
                assert grad[o, 0, a, b] == pytest.approx(np.sum(v[o] * xp[0, a:a + 6, b:b + 6]), abs=1e-12)


def test_zero_input_zero_first_layer_weight_grad(rng):
    stack = random_stack(rng)
    grads = conv_weight_vjp(stack, np.zeros((1, 5, 5)), rng.standard_normal((2, 5, 5)))
    assert np.all(grads[0] == 0)


@pytest.mark.parametrize("seed", range(5))
def test_input_vjp_adjoint_identity(seed):
    rng = np.random.default_rng(seed)
    stack = random_stack(rng, channels=(4, 3), kernel=(3, 3))
    x = rng.standard_normal((1, 8, 8))
    u = rng.standard_normal(x.shape)
    v = rng.standard_normal((3, 8, 8))
    h = 1e-6
    ju = (conv_forward(stack, x + h * u) - conv_forward(stack, x - h * u)) / (2 * h)
    lhs = np.vdot(ju, v)
    rhs = np.vdot(u, conv_input_vjp(stack, x, v))
    assert abs(lhs - rhs) / (np.linalg.norm(ju) * np.linalg.norm(v)) <= 1e-6


def test_weight_vjp_matches_fd_each_entry(rng):
    k = rng.standard_normal((2, 1, 3, 3))
    stack = LayerStack.from_kernels([k], final_linear=False)
    x = rng.standard_normal((1, 6, 6))
    v = rng.standard_normal((2, 6, 6))
    grad = conv_weight_vjp(stack, x, v)[0]
    h = 1e-6
    fd = np.zeros_like(k)
    for idx in np.ndindex(k.shape):
        e = np.zeros_like(k)
        e[idx] = h
        fp = np.vdot(conv_forward(stack.with_kernels([k + e]), x), v)
        fm = np.vdot(conv_forward(stack.with_kernels([k - e]), x), v)
        fd[idx] = (fp - fm) / (2 * h)
    assert rel_err(grad, fd) <= 1e-6


def test_conv_vjp_consistent(rng):
    stack = random_stack(rng)
    x = rng.standard_normal((1, 6, 6))
    v = rng.standard_normal((2, 6, 6))
    gin, gw = conv_vjp(stack, x, v)
    assert np.array_equal(gin, conv_input_vjp(stack, x, v))
    for a, b in zip(gw, conv_weight_vjp(stack, x, v)):
        assert np.array_equal(a, b)


# --- serialization ------------------------------------------------------------

def test_save_load_roundtrip(tmp_path, rng):
    stack = random_stack(rng, channels=(3, 1), kernel=(3, 7), final_linear=False)
    save_stack(stack, tmp_path / "net", role="sinogram")
    loaded, meta = load_stack(tmp_path / "net")
    assert meta == {"role": "sinogram"}
    assert loaded.final_linear is False
    for a, b in zip(stack.layers, loaded.layers):
        assert np.array_equal(a.kernel, b.kernel)
        assert a.padding == b.padding and a.smoothing_delta == b.smoothing_delta


def test_load_rejects_truncated(tmp_path, rng):
    save_stack(random_stack(rng), tmp_path / "net")
    data = (tmp_path / "net.bin").read_bytes()
    (tmp_path / "net.bin").write_bytes(data[:-8])
    with pytest.raises(ValueError, match="shorter"):
        load_stack(tmp_path / "net")
