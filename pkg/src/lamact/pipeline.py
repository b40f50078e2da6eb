"""End-to-end experiment steps shared by the command line, the scripts and the acceptance suite."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .initnet import convolutional_map, linear_step_size, train_advance, training_pairs
from .metrics import psnr, rmse, ssim
from .objective import lipschitz_model
from .solver import RunResult, run
from .stamp import stamp_mask
from .tomography import embed_views, fbp, project, random_ellipses_phantom, select_views, sparse_fbp

log = logging.getLogger(__name__)


@dataclass
class Simulation:
    phantom: np.ndarray
    sino_full: np.ndarray
    sino_sparse: np.ndarray


def simulate(cfg: RunConfig, phantom=None) -> Simulation:
    g = cfg.build_geometry()
    ph = cfg.build_phantom() if phantom is None else np.asarray(phantom, dtype=np.float64)
    s = project(ph, g)
    return Simulation(ph, s, select_views(s, cfg.build_selector()))


@dataclass
class Reconstruction:
    x: np.ndarray
    z: np.ndarray
    x0: np.ndarray
    z0: np.ndarray
    result: RunResult
    meta: dict
    metrics: dict


def run_metadata(cfg: RunConfig, problem, params, result: RunResult, lip) -> dict:
    return {
        "m": problem.n_positions,
        "m_R": problem.reg_R.positions(problem.geometry.image_shape),
        "m_Q": problem.reg_Q.positions(problem.geometry.sino_shape),
        "params": {k: getattr(params, k) for k in params.__dataclass_fields__},
        "phi_eps0": result.phi_eps0,
        "grad_norm0": result.grad_norm0,
        "certified": result.certified,
        "eps_final": result.eps_certificate,
        "grad_norm_final": result.grad_norm_final,
        "lipschitz": lip.to_dict(),
        "geometry": problem.geometry.to_dict(),
        "rate": cfg.rate,
        "offset": cfg.offset,
        "lam": cfg.lam,
        "init": cfg.init,
        "seed": cfg.seed,
    }


def reconstruct(cfg: RunConfig, sim: Simulation, params=None, callback=None, peak=None) -> Reconstruction:
    """Solve from the configured initialization and score against the simulation's phantom."""
    g, sel = cfg.build_geometry(), cfg.build_selector()
    problem = cfg.build_problem(sim.sino_sparse)
    params = cfg.build_params(g) if params is None else params
    x0, z0 = cfg.initial_pair(sim.sino_sparse)
    lip = lipschitz_model(problem, cfg.lipschitz_samples)
    t0 = time.perf_counter()
    res = run(x0, z0, params, problem, callback)
    elapsed = time.perf_counter() - t0
    meta = run_metadata(cfg, problem, params, res, lip)
    meta["runtime_s"] = elapsed
    ph = sim.phantom
    peak = float(ph.max() - ph.min()) if peak is None else peak
    x_fbp = sparse_fbp(sim.sino_sparse, g, sel)
    x_zero = fbp(embed_views(sim.sino_sparse, sel, g.n_views), g)
    metrics = {
        "psnr": psnr(res.x, ph, peak),
        "ssim": ssim(res.x, ph, peak),
        "psnr_fbp": psnr(x_fbp, ph, peak),
        "ssim_fbp": ssim(x_fbp, ph, peak),
        "psnr_fbp_unweighted": psnr(x_zero, ph, peak),
        "psnr_init": psnr(x0, ph, peak),
        "sino_rmse": rmse(res.z, sim.sino_full),
        "sino_rmse_init": rmse(z0, sim.sino_full),
        "peak": peak,
        "iterations": len(res.trace),
        "runtime_s": elapsed,
    }
    return Reconstruction(res.x, res.z, x0, z0, res, meta, metrics)


def fixed_epsilon_gradient(problem, x, z, eps) -> float:
    _, gx, gz = problem.value_and_grad(x, z, eps)
    return float(np.sqrt(np.vdot(gx, gx) + np.vdot(gz, gz)))


# --- init-map training -------------------------------------------------------

def training_dataset(cfg: RunConfig):
    g = cfg.build_geometry()
    rng = np.random.default_rng(cfg.seed)
    return [project(random_ellipses_phantom(g.image_size, rng), g) for _ in range(cfg.init_train.dataset_size)]


def train_init_map(cfg: RunConfig, dataset=None):
    """Returns (trained map, loss curve, step size used).

    The configured step_size is relative to 1/L of a single linear layer on the same data.
    """
    t = cfg.init_train
    g = cfg.build_geometry()
    dataset = training_dataset(cfg) if dataset is None else dataset
    m = convolutional_map(g, cfg.rate, t.n_blocks, t.hidden, tuple(t.kernel),
                          rng=np.random.default_rng(cfg.seed))
    pairs = training_pairs(dataset, cfg.rate, t.include_wrap)
    step = t.step_size * linear_step_size(pairs, tuple(t.kernel))
    m, curve = train_advance(m, dataset, cfg.rate, t.epochs, step, t.include_wrap)
    return m, curve, step


# --- stability ---------------------------------------------------------------

@dataclass
class StabilityRun:
    label: str
    perturbed: np.ndarray
    recon: Reconstruction
    psnr_perturbed: float
    difference: np.ndarray
    extra: dict


def perturb_text(cfg: RunConfig, phantom):
    mask = stamp_mask(phantom.shape, cfg.stability.text)
    return phantom + cfg.stability.contrast * mask, mask


def perturb_gaussian(phantom, sigma, seed):
    rng = np.random.default_rng(seed)
    return phantom + sigma * rng.standard_normal(phantom.shape)


def stability_run(cfg: RunConfig, clean: Reconstruction, phantom, perturbed, label, extra=None) -> StabilityRun:
    """Reconstruct from data of the perturbed phantom; PSNR against the perturbed truth uses the clean peak."""
    sim = simulate(cfg, perturbed)
    peak = float(phantom.max())
    rec = reconstruct(cfg, sim, peak=peak)
    return StabilityRun(label, perturbed, rec, psnr(rec.x, perturbed, peak), rec.x - clean.x, extra or {})


def stamp_visibility(run: StabilityRun, mask, contrast) -> dict:
    """Mask means of the perturbed reconstruction and of its difference to the clean reconstruction."""
    return {
        "mask_mean_abs": float(np.mean(np.abs(run.recon.x[mask]))),
        "mask_mean_difference": float(np.mean(run.difference[mask])),
        "half_contrast": contrast / 2.0,
        "visible": bool(np.mean(run.difference[mask]) > contrast / 2.0),
    }

