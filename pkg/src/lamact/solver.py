"""Linearized alternating minimization with sufficient-descent test, BCD safeguard and
epsilon-reduction schedule.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .objective import Problem
from .regularizer import smoothed_value_and_grad

log = logging.getLogger(__name__)

U_ACCEPTED = "u-accepted"
V_FALLBACK = "v-fallback"
TRACE_FIELDS = ("k", "eps", "phi_eps", "phi", "grad_norm", "branch", "linesearch_count", "reduced")


class LineSearchError(RuntimeError):
    """Safeguard backtracking exceeded max_linesearch; theory bounds this, so it signals a bug."""


@dataclass(frozen=True)
class SolverParams:
    alpha: float = 0.1
    beta: float = 0.1
    p: float = 0.1
    q: float = 0.1
    bar_alpha: float = 0.9
    bar_beta: float = 0.9
    rho: float = 0.5
    delta: float = 1e-3
    eta: float = 1e-3
    gamma: float = 0.5
    sigma: float = 1.0
    eps0: float = 1.0
    eps_tol: float = 1e-4
    max_outer_iters: int = 2000
    max_linesearch: int = 60

    def __post_init__(self):
        for name in ("alpha", "beta", "p", "q", "eta", "eps0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("bar_alpha", "bar_beta", "rho", "delta", "gamma"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {getattr(self, name)}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative (0 disables reduction)")
        if self.eps_tol < 0:
            raise ValueError("eps_tol must be non-negative")
        if self.max_outer_iters < 0 or self.max_linesearch < 0:
            raise ValueError("iteration limits must be non-negative")

    @property
    def alpha_hat(self) -> float:
        return self.alpha * self.p / (self.alpha + self.p)

    @property
    def beta_hat(self) -> float:
        return self.beta * self.q / (self.beta + self.q)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown solver parameters: {sorted(unknown)}")
        return cls(**d)


@dataclass
class _Eval:
    """Cached quantities at one point and one epsilon."""

    eps: float
    Ax: np.ndarray
    value: float
    gx: np.ndarray
    gz: np.ndarray
    grad_R: np.ndarray

    @property
    def grad_norm(self) -> float:
        return float(np.sqrt(np.vdot(self.gx, self.gx) + np.vdot(self.gz, self.gz)))


@dataclass
class SolverState:
    x: np.ndarray
    z: np.ndarray
    eps: float
    k: int = 0
    bar_alpha: float = 0.9
    bar_beta: float = 0.9
    cache: _Eval | None = field(default=None, repr=False)


@dataclass(frozen=True)
class IterationRecord:
    k: int
    eps: float
    phi_eps: float
    phi: float
    grad_norm: float
    branch: str
    linesearch_count: int
    reduced: bool


def initial_state(x0, z0, params: SolverParams) -> SolverState:
    return SolverState(
        np.asarray(x0, dtype=np.float64).copy(),
        np.asarray(z0, dtype=np.float64).copy(),
        params.eps0,
        0,
        params.bar_alpha,
        params.bar_beta,
    )


def _evaluate(problem: Problem, x, z, eps, Ax=None) -> _Eval:
    Ax = problem.project(x) if Ax is None else Ax
    vr, gr = smoothed_value_and_grad(problem.reg_R, x, eps)
    vq, gq = smoothed_value_and_grad(problem.reg_Q, z, eps)
    value = problem.f_value(Ax, z) + vr + vq
    return _Eval(eps, Ax, value, problem.grad_x_f(Ax, z) + gr, problem.grad_z_f(Ax, z) + gq, gr)


def _ensure_cache(state: SolverState, problem: Problem) -> _Eval:
    if state.cache is None or state.cache.eps != state.eps:
        Ax = None if state.cache is None else state.cache.Ax
        state.cache = _evaluate(problem, state.x, state.z, state.eps, Ax)
    return state.cache


def u_update(state: SolverState, params: SolverParams, problem: Problem):
    """Gradient step on f followed by a linearized proximal step on the regularizer, z block first."""
    ev = _ensure_cache(state, problem)
    eps = state.eps
    b = state.z - params.alpha * problem.grad_z_f(ev.Ax, state.z)
    u_z = b - params.alpha_hat * smoothed_value_and_grad(problem.reg_Q, b, eps)[1]
    c = state.x - params.beta * problem.grad_x_f(ev.Ax, u_z)
    u_x = c - params.beta_hat * smoothed_value_and_grad(problem.reg_R, c, eps)[1]
    return u_x, u_z


def _sq(a):
    return float(np.vdot(a, a))


def _sdc(state, candidate, params, problem):
    ev = _ensure_cache(state, problem)
    u_x, u_z = candidate
    Au = problem.project(u_x)
    value = problem.value(u_x, u_z, state.eps, Ax=Au)
    dx, dz = u_x - state.x, u_z - state.z
    descent = value - ev.value <= -params.eta * (_sq(dx) + _sq(dz))
    small_grad = ev.grad_norm <= (math.sqrt(_sq(dx)) + math.sqrt(_sq(dz))) / params.eta
    return bool(descent and small_grad), value, Au


def sdc_check(state: SolverState, candidate, params: SolverParams, problem: Problem) -> bool:
    """Sufficient descent conditions: enough decrease and gradient bounded by step length."""
    return _sdc(state, candidate, params, problem)[0]


def _safeguard(state, params, problem):
    ev = _ensure_cache(state, problem)
    x, z = state.x, state.z
    ba, bb = state.bar_alpha, state.bar_beta
    for ell in range(params.max_linesearch + 1):
        v_z = z - ba * ev.gz
        v_x = x - bb * (problem.grad_x_f(ev.Ax, v_z) + ev.grad_R)
        Av = problem.project(v_x)
        value = problem.value(v_x, v_z, state.eps, Ax=Av)
        if value - ev.value <= -params.delta * (_sq(v_x - x) + _sq(v_z - z)):
            state.bar_alpha, state.bar_beta = ba, bb
            return v_x, v_z, ell, value, Av
        ba, bb = params.rho * ba, params.rho * bb
    raise LineSearchError(
        f"safeguard line search exceeded {params.max_linesearch} reductions at k={state.k}, "
        f"eps={state.eps:.3e}, phi_eps={ev.value:.6e}, grad_norm={ev.grad_norm:.6e}, "
        f"last trial phi_eps={value:.6e}, bar_alpha={ba / params.rho:.3e}, bar_beta={bb / params.rho:.3e}"
    )


def bcd_safeguard(state: SolverState, params: SolverParams, problem: Problem):
    """Backtracked block gradient step; returns (v_x, v_z, linesearch_count).

    The accepted (bar_alpha, bar_beta) are written back to the state.
    """
    v_x, v_z, ell, _, _ = _safeguard(state, params, problem)
    return v_x, v_z, ell


def lama_step(state: SolverState, params: SolverParams, problem: Problem):
    """One outer iteration; returns (new state, IterationRecord)."""
    _ensure_cache(state, problem)
    eps = state.eps
    candidate = u_update(state, params, problem)
    ok, value, Au = _sdc(state, candidate, params, problem)
    if ok:
        x_new, z_new = candidate
        Ax_new, branch, ell = Au, U_ACCEPTED, 0
    else:
        x_new, z_new, ell, value, Ax_new = _safeguard(state, params, problem)
        branch = V_FALLBACK
    ev = _evaluate(problem, x_new, z_new, eps, Ax_new)
    grad_norm = ev.grad_norm
    reduced = grad_norm < params.sigma * params.gamma * eps
    record = IterationRecord(
        state.k, eps, ev.value, problem.phi(x_new, z_new, Ax=Ax_new), grad_norm, branch, ell, bool(reduced)
    )
    new = SolverState(x_new, z_new, eps, state.k + 1, state.bar_alpha, state.bar_beta, ev)
    if reduced:
        new.eps = params.gamma * eps
        new.bar_alpha, new.bar_beta = params.bar_alpha, params.bar_beta
    return new, record


@dataclass
class RunResult:
    x: np.ndarray
    z: np.ndarray
    trace: list
    phi_eps0: float
    grad_norm0: float
    certified: bool
    eps_certificate: float
    grad_norm_final: float

    @property
    def certificate(self) -> tuple[float, float]:
        return self.eps_certificate, self.grad_norm_final


def run(x0, z0, params: SolverParams, problem: Problem, callback=None) -> RunResult:
    """Iterate until max_outer_iters, or until a reduction fires at eps <= eps_tol."""
    state = initial_state(x0, z0, params)
    ev0 = _ensure_cache(state, problem)
    trace = []
    certified = False
    eps_cert, grad_final = state.eps, ev0.grad_norm
    while state.k < params.max_outer_iters:
        state, rec = lama_step(state, params, problem)
        trace.append(rec)
        eps_cert, grad_final = rec.eps, rec.grad_norm
        if callback is not None:
            callback(state, rec)
        if rec.k % 100 == 0:
            log.debug("k=%d eps=%.3e phi_eps=%.6e grad=%.3e %s", rec.k, rec.eps, rec.phi_eps, rec.grad_norm, rec.branch)
        if rec.reduced and rec.eps <= params.eps_tol:
            certified = True
            break
    return RunResult(state.x, state.z, trace, ev0.value, ev0.grad_norm, certified, eps_cert, grad_final)


# --- trace export --------------------------------------------------------

def write_trace(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_FIELDS)
        for r in trace:
            w.writerow([r.k, repr(r.eps), repr(r.phi_eps), repr(r.phi), repr(r.grad_norm),
                        r.branch, r.linesearch_count, int(r.reduced)])


def read_trace(path) -> list[IterationRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_FIELDS:
            raise ValueError(f"{path}: unexpected trace header {reader.fieldnames}")
        return [
            IterationRecord(int(row["k"]), float(row["eps"]), float(row["phi_eps"]), float(row["phi"]),
                            float(row["grad_norm"]), row["branch"], int(row["linesearch_count"]),
                            bool(int(row["reduced"])))
            for row in reader
        ]
