import csv
import json

import numpy as np
import pytest

from lamact.cli import EXIT_INVALID, EXIT_INVARIANT, EXIT_OK, main
from lamact.config import ConfigError, config_from_dict, default_config, load_config
from lamact.io import load_array
from lamact.stamp import stamp_mask, text_bitmap

SMALL = {
    "geometry": {"image_size": 24, "n_views": 32, "n_detectors": 35},
    "solver": {"alpha": 0.5, "beta": 1.0, "p": 0.5, "q": 1.0, "bar_alpha": 0.9, "bar_beta": 0.9,
               "sigma": 100.0, "eps0": 1.0, "max_outer_iters": 60},
    "lipschitz_samples": 10,
    "init_train": {"dataset_size": 3, "epochs": 4},
    "stability": {"sigmas": [0.01, 0.05]},
}


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL))
    return path


def test_default_config_is_desk_geometry():
    cfg = default_config()
    g = cfg.build_geometry()
    assert (g.image_size, g.n_views, g.n_detectors, cfg.rate) == (128, 128, 185, 2)
    p = cfg.build_params()
    assert p.beta == pytest.approx(1.0 / 15820, rel=0.01)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown keys"):
        config_from_dict({"geometry": {"size": 3}})
    with pytest.raises(ConfigError):
        config_from_dict({"solver": {"alpah": 1.0}})
    with pytest.raises(ConfigError):
        config_from_dict({"rate": 3})
    with pytest.raises(ConfigError):
        config_from_dict({"init": "learned"})


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")


def test_config_roundtrip(small_cfg):
    cfg = load_config(small_cfg)
    assert config_from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_cli_invalid_config_exit_code(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"geometri": {}}))
    assert main(["simulate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert "unknown keys" in capsys.readouterr().err


def test_simulate_is_deterministic(small_cfg, tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", "--config", str(small_cfg), "--out", str(tmp_path / d), "--seed", "4"]) == EXIT_OK
    for name in ("phantom", "sinogram_full", "sinogram_sparse"):
        assert (tmp_path / "a" / f"{name}.bin").read_bytes() == (tmp_path / "b" / f"{name}.bin").read_bytes()
    sparse, header = load_array(tmp_path / "a" / "sinogram_sparse")
    assert sparse.shape == (16, 35) and header["rate"] == 2


def test_reconstruct_requires_simulation(small_cfg, tmp_path):
    assert main(["reconstruct", "--config", str(small_cfg), "--out", str(tmp_path)]) == EXIT_INVALID


def test_reconstruct_and_report(small_cfg, tmp_path, capsys):
    out = str(tmp_path)
    assert main(["simulate", "--config", str(small_cfg), "--out", out]) == EXIT_OK
    assert main(["reconstruct", "--config", str(small_cfg), "--out", out]) == EXIT_OK
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["iterations"] == 60 and np.isfinite(metrics["psnr"])
    for name in ("x_star", "z_star", "x_init"):
        assert (tmp_path / f"{name}.bin").exists()
    capsys.readouterr()
    assert main(["report", out]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)
    for name in ("report.json", "report.txt", "x_star.pgm", "error.pgm"):
        assert (tmp_path / name).exists()

    # corrupt one value so the surrogate check fails
    rows = list(csv.reader(open(tmp_path / "trace.csv")))
    rows[30][2] = repr(float(rows[29][2]) + 10.0)
    with open(tmp_path / "trace.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    assert main(["report", out]) == EXIT_INVARIANT
    assert "FAIL surrogate-monotone" in capsys.readouterr().out


def test_report_missing_run(tmp_path):
    assert main(["report", str(tmp_path)]) == EXIT_INVALID


def test_init_train_and_learned_init(small_cfg, tmp_path):
    out = tmp_path / "train"
    assert main(["init-train", "--config", str(small_cfg), "--out", str(out)]) == EXIT_OK
    curve = list(csv.DictReader(open(out / "init_loss.csv")))
    assert len(curve) == 5 and float(curve[-1]["loss"]) < float(curve[0]["loss"])
    cfg = dict(SMALL, init="learned", init_map_path=str(out / "advance_map"))
    (tmp_path / "learned.json").write_text(json.dumps(cfg))
    run = str(tmp_path / "run")
    assert main(["simulate", "--config", str(tmp_path / "learned.json"), "--out", run]) == EXIT_OK
    assert main(["reconstruct", "--config", str(tmp_path / "learned.json"), "--out", run]) == EXIT_OK


def test_stability_gaussian_single_sigma(small_cfg, tmp_path):
    assert main(["stability", "--config", str(small_cfg), "--out", str(tmp_path), "--sigma", "0.03"]) == EXIT_OK
    summary = json.loads((tmp_path / "stability_gaussian.json").read_text())
    assert len(summary["runs"]) == 1 and np.isfinite(summary["runs"][0]["psnr_perturbed_gt"])
    assert (tmp_path / "gaussian-0.03_difference.pgm").exists()


def test_stamp_mask():
    bm = text_bitmap("CAT")
    assert bm.shape == (7, 3 * 5 + 2)
    mask = stamp_mask((128, 128), "CAN U SEE IT")
    assert mask.dtype == bool and mask.any()
    cols = np.flatnonzero(mask.any(axis=0))
    assert 0 < cols[0] and cols[-1] < 127
    with pytest.raises(ValueError):
        stamp_mask((64, 64), "CAN U SEE IT")
    with pytest.raises(ValueError):
        text_bitmap("Q")
