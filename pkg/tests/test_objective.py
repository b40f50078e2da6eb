import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lamact.objective import (
    FidelityModel,
    Problem,
    fidelity,
    grad_phi_eps,
    grad_x_f,
    grad_z_f,
    lipschitz_model,
    phi,
    phi_eps,
    stationarity_residual,
    x_step_from_operator,
)
from lamact.regularizer import Regularizer, random_extractor, sinogram_regularizer, tv_regularizer
from lamact.tomography import Geometry, ViewSelector, project, select_views

G = Geometry(8, 12, 13)
SEL = ViewSelector(3, 1)


def dense_A(g):
    n = g.image_size ** 2
    cols = [project(np.eye(n)[i].reshape(g.image_shape), g).ravel() for i in range(n)]
    return np.stack(cols, axis=1)


def dense_P0(g, sel):
    idx = sel.indices(g.n_views)
    rows = []
    for v in idx:
        for d in range(g.n_detectors):
            e = np.zeros(g.sino_shape)
            e[v, d] = 1.0
            rows.append(e.ravel())
    return np.array(rows)


A_DENSE = dense_A(G)
P0_DENSE = dense_P0(G, SEL)


def make_problem(rng, lam=0.7, reg_R=None, reg_Q=None):
    s0 = rng.standard_normal((len(SEL.indices(G.n_views)), G.n_detectors))
    model = FidelityModel(G, SEL, s0, lam)
    return Problem(model, reg_R or tv_regularizer(0.5), reg_Q or sinogram_regularizer(0.2))


def draw(rng):
    return rng.standard_normal(G.image_shape), rng.standard_normal(G.sino_shape)


def test_fidelity_matches_dense_oracle(rng):
    p = make_problem(rng)
    x, z = draw(rng)
    s0 = p.model.s0.ravel()
    r1 = A_DENSE @ x.ravel() - z.ravel()
    r2 = P0_DENSE @ z.ravel() - s0
    expected = 0.5 * r1 @ r1 + 0.5 * 0.7 * r2 @ r2
    assert fidelity(p.model, x, z) == pytest.approx(expected, rel=1e-12)
    gx = A_DENSE.T @ r1
    gz = -r1 + 0.7 * P0_DENSE.T @ r2
    assert np.allclose(grad_x_f(p.model, x, z).ravel(), gx, rtol=1e-11, atol=1e-11)
    assert np.allclose(grad_z_f(p.model, x, z).ravel(), gz, rtol=1e-11, atol=1e-11)


def test_fidelity_zero_at_consistent_pair(rng):
    x = rng.standard_normal(G.image_shape)
    z = project(x, G)
    model = FidelityModel(G, SEL, select_views(z, SEL), 2.0)
    assert fidelity(model, x, z) == pytest.approx(0.0, abs=1e-20)
    assert np.allclose(grad_x_f(model, x, z), 0, atol=1e-12)


def test_fidelity_at_origin(rng):
    p = make_problem(rng, lam=3.0)
    x, z = np.zeros(G.image_shape), np.zeros(G.sino_shape)
    assert fidelity(p.model, x, z) == pytest.approx(1.5 * np.sum(p.model.s0 ** 2), rel=1e-14)


def test_model_validation(rng):
    with pytest.raises(ValueError):
        FidelityModel(G, SEL, np.zeros((3, G.n_detectors)))
    with pytest.raises(ValueError):
        FidelityModel(G, SEL, np.zeros((4, G.n_detectors)), lam=0.0)
    p = make_problem(rng)
    with pytest.raises(ValueError):
        fidelity(p.model, np.zeros((7, 8)), np.zeros(G.sino_shape))
    with pytest.raises(ValueError):
        fidelity(p.model, np.zeros(G.image_shape), np.zeros((12, 12)))


def test_problem_agrees_with_functional_forms(rng):
    p = make_problem(rng)
    x, z = draw(rng)
    assert p.value(x, z, 0.1) == pytest.approx(phi_eps(p.model, p.reg_R, p.reg_Q, x, z, 0.1), rel=1e-13)
    assert p.phi(x, z) == pytest.approx(phi(p.model, p.reg_R, p.reg_Q, x, z), rel=1e-13)
    v, gx, gz = p.value_and_grad(x, z, 0.1)
    ex, ez = grad_phi_eps(p.model, p.reg_R, p.reg_Q, x, z, 0.1)
    assert np.allclose(gx, ex, atol=1e-12) and np.allclose(gz, ez, atol=1e-12)
    res = stationarity_residual(p.reg_R, p.reg_Q, x, z, 0.1, p.model)
    assert res == pytest.approx(np.sqrt(np.sum(gx ** 2) + np.sum(gz ** 2)), rel=1e-13)
    assert p.n_positions == 8 * 8 + 12 * 13


def _fd_check(p, x, z, eps, rng):
    dx, dz = draw(rng)
    h = 1e-6
    fd = (p.value(x + h * dx, z + h * dz, eps) - p.value(x - h * dx, z - h * dz, eps)) / (2 * h)
    _, gx, gz = p.value_and_grad(x, z, eps)
    an = np.vdot(gx, dx) + np.vdot(gz, dz)
    return abs(fd - an) / max(abs(an), 1.0)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_fd_linear_regularizers(seed):
    rng = np.random.default_rng(seed)
    p = make_problem(rng)
    x, z = draw(rng)
    assert _fd_check(p, x, z, 1e-3, rng) <= 1e-7


@pytest.mark.parametrize("seed", range(3))
def test_gradient_matches_fd_nonlinear_regularizers(seed):
    rng = np.random.default_rng(seed)
    reg_R = Regularizer(random_extractor(np.random.default_rng(10 + seed)))
    reg_Q = Regularizer(random_extractor(np.random.default_rng(20 + seed)), role="sinogram")
    p = make_problem(rng, reg_R=reg_R, reg_Q=reg_Q)
    x, z = draw(rng)
    assert _fd_check(p, x, z, 1e-3, rng) <= 1e-6


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_fidelity_convex_midpoint(seed):
    rng = np.random.default_rng(seed)
    p = make_problem(rng)
    a, b = draw(rng), draw(rng)
    mid = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
    fa, fb, fm = (fidelity(p.model, *u) for u in (a, b, mid))
    assert fm <= (fa + fb) / 2 + 1e-9 * (abs(fa) + abs(fb))


def test_sandwich_over_draws():
    rng = np.random.default_rng(7)
    p = make_problem(rng)
    for _ in range(50):
        x, z = draw(rng)
        x *= rng.uniform(0.001, 2)
        eps = 10.0 ** rng.uniform(-4, 0)
        lower, upper = p.phi(x, z) - p.n_positions * eps / 2, p.phi(x, z)
        val = p.value(x, z, eps)
        assert lower - 1e-9 <= val <= upper + 1e-9


def test_lipschitz_model_consistent(rng):
    p = make_problem(rng)
    lip = lipschitz_model(p, samples=10)
    # Hessian of f is [[A^T A, -A^T], [-A, I + lam P0^T P0]]
    nx = A_DENSE.shape[1]
    H = np.block([[A_DENSE.T @ A_DENSE, -A_DENSE.T],
                  [-A_DENSE, np.eye(A_DENSE.shape[0]) + 0.7 * P0_DENSE.T @ P0_DENSE]])
    assert lip.fidelity == pytest.approx(np.linalg.eigvalsh(H)[-1], rel=1e-6)
    assert lip.constant(0.1) == pytest.approx(
        lip.fidelity + max(lip.parts_R.constant(0.1), lip.parts_Q.constant(0.1)))
    d = lip.to_dict()
    assert d["R"]["positions"] == 64 and nx == 64


def test_x_step_from_operator():
    lam_max = np.linalg.eigvalsh(A_DENSE.T @ A_DENSE)[-1]
    assert x_step_from_operator(G, 2.0) == pytest.approx(2.0 / lam_max, rel=1e-6)
