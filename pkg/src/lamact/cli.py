"""Command-line front end: simulate, reconstruct, init-train, stability, report.

Exit codes: 0 success, 2 invalid configuration or missing inputs, 3 failed invariant check.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import diagnostics
from .config import ConfigError, RunConfig, default_config, load_config
from .initnet import save_map, write_loss_curve
from .io import load_array, save_array, write_pgm
from .pipeline import (
    Simulation,
    perturb_gaussian,
    perturb_text,
    reconstruct,
    simulate,
    stability_run,
    stamp_visibility,
    train_init_map,
)
from .solver import LineSearchError, read_trace, write_trace

log = logging.getLogger("lamact")

EXIT_OK, EXIT_INVALID, EXIT_INVARIANT = 0, 2, 3


class InputError(Exception):
    pass


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else default_config()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    cfg = dataclasses.replace(cfg, **overrides).validate()
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    return cfg


# --- verbs ---------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> Simulation:
    out, g = Path(cfg.out), cfg.build_geometry()
    sim = simulate(cfg)
    save_array(sim.phantom, out / "phantom", "image", g, seed=cfg.seed)
    save_array(sim.sino_full, out / "sinogram_full", "sinogram", g)
    save_array(sim.sino_sparse, out / "sinogram_sparse", "sparse-sinogram", g, rate=cfg.rate, offset=cfg.offset)
    write_pgm(sim.phantom, out / "phantom.pgm")
    log.info("simulated %s into %s", g, out)
    return sim


def _load_simulation(cfg: RunConfig, src: Path) -> Simulation:
    arrays = []
    for name in ("phantom", "sinogram_full", "sinogram_sparse"):
        if not (src / f"{name}.json").exists():
            raise InputError(f"missing {src / name}.json; run 'simulate' first")
        arr, header = load_array(src / name)
        arrays.append(arr)
        if header.get("geometry") != cfg.build_geometry().to_dict():
            raise InputError(f"{src / name}: geometry differs from the configuration")
    return Simulation(*arrays)


def _save_reconstruction(rec, out: Path, g, prefix=""):
    save_array(rec.x, out / f"{prefix}x_star", "image", g)
    save_array(rec.z, out / f"{prefix}z_star", "sinogram", g)
    save_array(rec.x0, out / f"{prefix}x_init", "image", g)
    write_trace(rec.result.trace, out / f"{prefix}trace.csv")
    _write_json(out / f"{prefix}run.json", rec.meta)
    _write_json(out / f"{prefix}metrics.json", rec.metrics)


def cmd_reconstruct(cfg: RunConfig, src: Path | None = None):
    out = Path(cfg.out)
    sim = _load_simulation(cfg, src or out)
    rec = reconstruct(cfg, sim)
    _save_reconstruction(rec, out, cfg.build_geometry())
    _write_json(out / "config.json", cfg.to_dict())
    log.info("psnr %.3f dB (fbp %.3f dB), %d iterations",
             rec.metrics["psnr"], rec.metrics["psnr_fbp"], rec.metrics["iterations"])
    return rec


def cmd_init_train(cfg: RunConfig):
    out = Path(cfg.out)
    m, curve, step = train_init_map(cfg)
    save_map(m, out / "advance_map")
    write_loss_curve(curve, out / "init_loss.csv")
    _write_json(out / "init_train.json", {"step_size": step, "initial_loss": curve[0], "final_loss": curve[-1]})
    log.info("init map loss %.4e -> %.4e", curve[0], curve[-1])
    return m, curve


def cmd_stability(cfg: RunConfig, perturbation: str, sigma=None) -> dict:
    out = Path(cfg.out)
    g = cfg.build_geometry()
    clean_sim = simulate(cfg)
    phantom = clean_sim.phantom
    clean = reconstruct(cfg, clean_sim, peak=float(phantom.max()))
    summary = {"peak": float(phantom.max()), "clean_psnr": clean.metrics["psnr"], "runs": []}
    if perturbation == "text":
        perturbed, mask = perturb_text(cfg, phantom)
        run = stability_run(cfg, clean, phantom, perturbed, "text")
        entry = {"label": "text", "psnr_perturbed_gt": run.psnr_perturbed}
        entry.update(stamp_visibility(run, mask, cfg.stability.contrast))
        summary["runs"].append(entry)
        save_array(mask.astype(float), out / "stamp_mask", "image", g)
        runs = [run]
    else:
        sigmas = cfg.stability.sigmas if sigma is None else (sigma,)
        runs = []
        for i, s in enumerate(sigmas):
            perturbed = perturb_gaussian(phantom, s, cfg.seed + i)
            run = stability_run(cfg, clean, phantom, perturbed, f"gaussian-{s:g}")
            summary["runs"].append({"label": run.label, "sigma": s, "psnr_perturbed_gt": run.psnr_perturbed})
            runs.append(run)
    for run in runs:
        save_array(run.recon.x, out / f"{run.label}_x_star", "image", g)
        save_array(run.difference, out / f"{run.label}_difference", "image", g)
        write_pgm(run.recon.x, out / f"{run.label}_x_star.pgm")
        lim = float(np.max(np.abs(run.difference))) or 1.0
        write_pgm(run.difference, out / f"{run.label}_difference.pgm", -lim, lim)
    _write_json(out / f"stability_{perturbation}.json", summary)
    return summary


def cmd_report(run_dir: Path, out: Path | None = None):
    """Re-derive the solver invariants from trace.csv and run.json; write report.json and renderings."""
    out = out or run_dir
    out.mkdir(parents=True, exist_ok=True)
    for name in ("trace.csv", "run.json"):
        if not (run_dir / name).exists():
            raise InputError(f"missing {run_dir / name}")
    trace = read_trace(run_dir / "trace.csv")
    meta = json.loads((run_dir / "run.json").read_text())
    checks = diagnostics.check_all(trace, meta)
    report = {"summary": diagnostics.summarize(trace), "checks": [dataclasses.asdict(c) for c in checks]}
    if (run_dir / "metrics.json").exists():
        report["metrics"] = json.loads((run_dir / "metrics.json").read_text())
    for name in ("x_star", "x_init", "phantom"):
        if (run_dir / f"{name}.json").exists():
            write_pgm(load_array(run_dir / name)[0], out / f"{name}.pgm")
    if (run_dir / "x_star.json").exists() and (run_dir / "phantom.json").exists():
        err = load_array(run_dir / "x_star")[0] - load_array(run_dir / "phantom")[0]
        lim = float(np.max(np.abs(err))) or 1.0
        write_pgm(err, out / "error.pgm", -lim, lim)
    _write_json(out / "report.json", report)
    (out / "report.txt").write_text("\n".join(c.line() for c in checks) + "\n")
    return checks


# --- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration (default: built-in desk config)")
    common.add_argument("--seed", type=int, help="override the configuration seed")
    common.add_argument("--out", type=str, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lamact", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("simulate", parents=[common], help="write phantom and sinograms")
    rec = sub.add_parser("reconstruct", parents=[common], help="solve from simulated data")
    rec.add_argument("--input", type=Path, help="directory holding simulate outputs (default: --out)")
    sub.add_parser("init-train", parents=[common], help="train a convolutional view-advance map")
    stab = sub.add_parser("stability", parents=[common], help="perturbation stability experiment")
    stab.add_argument("--perturbation", choices=("gaussian", "text"), default="gaussian")
    stab.add_argument("--sigma", type=float, help="single noise level (default: configured list)")
    rep = sub.add_parser("report", parents=[common], help="check solver invariants of a run directory")
    rep.add_argument("run_dir", type=Path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        if args.verb == "report":
            checks = cmd_report(args.run_dir, Path(args.out) if args.out else None)
            for c in checks:
                print(c.line())
            return EXIT_OK if all(c.passed for c in checks) else EXIT_INVARIANT
        cfg = _resolve(args)
        if args.verb == "simulate":
            cmd_simulate(cfg)
        elif args.verb == "reconstruct":
            rec = cmd_reconstruct(cfg, args.input)
            print(json.dumps(rec.metrics, indent=2, default=_json_default))
        elif args.verb == "init-train":
            cmd_init_train(cfg)
        elif args.verb == "stability":
            summary = cmd_stability(cfg, args.perturbation, args.sigma)
            print(json.dumps(summary, indent=2, default=_json_default))
    except (ConfigError, InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except LineSearchError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
