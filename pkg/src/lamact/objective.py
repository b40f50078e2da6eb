"""Dual-domain objective f + R + Q, its smoothed version and gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .regularizer import (
    Regularizer,
    lipschitz_parts,
    norm21,
    smoothed_value,
    smoothed_value_and_grad,
)
from .tomography import (
    Geometry,
    ViewSelector,
    backproject,
    embed_views,
    operator_norm_sq,
    project,
    select_views,
)


@dataclass(frozen=True)
class FidelityModel:
    """f(x, z) = 1/2 ||A x - z||^2 + lam/2 ||P0 z - s0||^2."""

    geometry: Geometry
    selector: ViewSelector
    s0: np.ndarray
    lam: float = 1.0

    def __post_init__(self):
        expected = (len(self.selector.indices(self.geometry.n_views)), self.geometry.n_detectors)
        s0 = np.asarray(self.s0, dtype=np.float64)
        if s0.shape != expected:
            raise ValueError(f"s0 shape {s0.shape} does not match selected shape {expected}")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        object.__setattr__(self, "s0", s0)

    def residual_z(self, z):
        return select_views(z, self.selector) - self.s0

    def check(self, x, z):
        x = np.asarray(x, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        if x.shape != self.geometry.image_shape:
            raise ValueError(f"x shape {x.shape} does not match {self.geometry.image_shape}")
        if z.shape != self.geometry.sino_shape:
            raise ValueError(f"z shape {z.shape} does not match {self.geometry.sino_shape}")
        return x, z


def fidelity(model: FidelityModel, x, z) -> float:
    x, z = model.check(x, z)
    r1 = project(x, model.geometry) - z
    r2 = model.residual_z(z)
    return 0.5 * float(np.vdot(r1, r1)) + 0.5 * model.lam * float(np.vdot(r2, r2))


def grad_x_f(model: FidelityModel, x, z) -> np.ndarray:
    x, z = model.check(x, z)
    return backproject(project(x, model.geometry) - z, model.geometry)


def grad_z_f(model: FidelityModel, x, z) -> np.ndarray:
    x, z = model.check(x, z)
    return (z - project(x, model.geometry)) + model.lam * embed_views(
        model.residual_z(z), model.selector, model.geometry.n_views
    )


def phi(model, reg_R: Regularizer, reg_Q: Regularizer, x, z) -> float:
    return fidelity(model, x, z) + norm21(reg_R, x) + norm21(reg_Q, z)


def phi_eps(model, reg_R: Regularizer, reg_Q: Regularizer, x, z, eps) -> float:
    return fidelity(model, x, z) + smoothed_value(reg_R, x, eps)[0] + smoothed_value(reg_Q, z, eps)[0]


def grad_phi_eps(model, reg_R: Regularizer, reg_Q: Regularizer, x, z, eps):
    gx = grad_x_f(model, x, z) + smoothed_value_and_grad(reg_R, x, eps)[1]
    gz = grad_z_f(model, x, z) + smoothed_value_and_grad(reg_Q, z, eps)[1]
    return gx, gz


def stationarity_residual(reg_R, reg_Q, x, z, eps, model) -> float:
    """||grad Phi_eps(x, z)||; its vanishing along eps -> 0 certifies approximate Clarke stationarity."""
    gx, gz = grad_phi_eps(model, reg_R, reg_Q, x, z, eps)
    return float(np.sqrt(np.vdot(gx, gx) + np.vdot(gz, gz)))


@dataclass
class Problem:
    """Bundle of fidelity model and the two regularizers, with cached evaluation helpers."""

    model: FidelityModel
    reg_R: Regularizer
    reg_Q: Regularizer

    @property
    def geometry(self) -> Geometry:
        return self.model.geometry

    @property
    def n_positions(self) -> int:
        g = self.geometry
        return self.reg_R.positions(g.image_shape) + self.reg_Q.positions(g.sino_shape)

    def project(self, x):
        return project(x, self.geometry)

    def f_value(self, Ax, z):
        r1 = Ax - z
        r2 = self.model.residual_z(z)
        return 0.5 * float(np.vdot(r1, r1)) + 0.5 * self.model.lam * float(np.vdot(r2, r2))

    def grad_z_f(self, Ax, z):
        m = self.model
        return (z - Ax) + m.lam * embed_views(m.residual_z(z), m.selector, self.geometry.n_views)

    def grad_x_f(self, Ax, z):
        return backproject(Ax - z, self.geometry)

    def value(self, x, z, eps, Ax=None):
        Ax = self.project(x) if Ax is None else Ax
        return (
            self.f_value(Ax, z)
            + smoothed_value(self.reg_R, x, eps)[0]
            + smoothed_value(self.reg_Q, z, eps)[0]
        )

    def value_and_grad(self, x, z, eps, Ax=None):
        Ax = self.project(x) if Ax is None else Ax
        vr, gr = smoothed_value_and_grad(self.reg_R, x, eps)
        vq, gq = smoothed_value_and_grad(self.reg_Q, z, eps)
        value = self.f_value(Ax, z) + vr + vq
        return value, self.grad_x_f(Ax, z) + gr, self.grad_z_f(Ax, z) + gq

    def phi(self, x, z, Ax=None):
        Ax = self.project(x) if Ax is None else Ax
        return self.f_value(Ax, z) + norm21(self.reg_R, x) + norm21(self.reg_Q, z)

    def fidelity_lipschitz(self, iters=100) -> float:
        """Largest eigenvalue of the Hessian of f in (x, z), by power iteration."""
        g = self.geometry
        rng = np.random.default_rng(0)
        vx = rng.standard_normal(g.image_shape)
        vz = rng.standard_normal(g.sino_shape)
        lam_max = 0.0
        for _ in range(iters):
            Avx = project(vx, g)
            wx = backproject(Avx - vz, g)
            sel = self.model.selector
            wz = vz - Avx + self.model.lam * embed_views(select_views(vz, sel), sel, g.n_views)
            nrm = np.sqrt(np.vdot(wx, wx) + np.vdot(wz, wz))
            lam_max = float(nrm)
            vx, vz = wx / nrm, wz / nrm
        return lam_max


@dataclass(frozen=True)
class LipschitzModel:
    """Pieces of the Lipschitz constant of grad Phi_eps: L_f + max(L_R(eps), L_Q(eps))."""

    fidelity: float
    parts_R: object
    parts_Q: object

    def constant(self, eps: float) -> float:
        return self.fidelity + max(self.parts_R.constant(eps), self.parts_Q.constant(eps))

    def to_dict(self) -> dict:
        return {
            "fidelity": self.fidelity,
            "R": {"positions": self.parts_R.positions, "jac_norm": self.parts_R.jac_norm,
                  "jac_lipschitz": self.parts_R.jac_lipschitz},
            "Q": {"positions": self.parts_Q.positions, "jac_norm": self.parts_Q.jac_norm,
                  "jac_lipschitz": self.parts_Q.jac_lipschitz},
        }


def lipschitz_model(problem: Problem, samples=100) -> LipschitzModel:
    g = problem.geometry
    return LipschitzModel(
        problem.fidelity_lipschitz(),
        lipschitz_parts(problem.reg_R, g.image_shape, samples),
        lipschitz_parts(problem.reg_Q, g.sino_shape, samples),
    )


def x_step_from_operator(geom: Geometry, scale=1.0) -> float:
    """Step size scale / ||A||^2 for the image block."""
    return scale / operator_norm_sq(geom)
