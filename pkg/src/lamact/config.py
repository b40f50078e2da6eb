"""Run configuration: nested dataclasses loaded from JSON with strict key checking."""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .initnet import ViewAdvanceMap, interpolation_map, load_map
from .objective import FidelityModel, Problem
from .regularizer import (
    Regularizer,
    load_regularizer,
    random_extractor,
    sinogram_regularizer,
    tv_regularizer,
)
from .solver import SolverParams
from .tomography import (
    Geometry,
    ViewSelector,
    embed_views,
    operator_norm_sq,
    random_ellipses_phantom,
    shepp_logan,
    sparse_fbp,
)

INIT_MODES = ("zero-fill-fbp", "interpolation", "learned")
PHANTOMS = ("shepp-logan", "random-ellipses")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeometryConfig:
    image_size: int = 128
    n_views: int = 128
    n_detectors: int = 185
    detector_spacing: float = 1.0

    def build(self) -> Geometry:
        return Geometry(self.image_size, self.n_views, self.n_detectors, self.detector_spacing)


@dataclass(frozen=True)
class RegularizerConfig:
    """kind: tv | sinogram-fd | random | file."""

    kind: str = "tv"
    weight: float = 1.0
    path: str | None = None
    channels: tuple[int, ...] = (4, 3)
    kernel: tuple[int, int] = (3, 3)
    scale: float = 0.5
    seed: int = 0

    def build(self, role: str) -> Regularizer:
        if self.kind == "tv":
            return tv_regularizer(self.weight)
        if self.kind == "sinogram-fd":
            return sinogram_regularizer(self.weight)
        if self.kind == "random":
            stack = random_extractor(np.random.default_rng(self.seed), tuple(self.channels),
                                     tuple(self.kernel), self.scale)
            return Regularizer(stack, role)
        if self.kind == "file":
            if not self.path:
                raise ConfigError("regularizer kind 'file' needs a path")
            if not Path(self.path).with_suffix(".json").exists():
                raise ConfigError(f"regularizer file {self.path} not found")
            return load_regularizer(self.path)
        raise ConfigError(f"unknown regularizer kind {self.kind!r}")


@dataclass(frozen=True)
class InitTrainConfig:
    dataset_size: int = 20
    epochs: int = 60
    # relative to 1/L of a single linear layer on the same data
    step_size: float = 20.0
    n_blocks: int = 1
    hidden: int = 4
    kernel: tuple[int, int] = (3, 7)
    include_wrap: bool = True


@dataclass(frozen=True)
class StabilityConfig:
    text: str = "CAN U SEE IT"
    contrast: float = 0.5
    sigmas: tuple[float, ...] = (0.01, 0.03, 0.05)


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    rate: int = 2
    offset: int = 0
    lam: float = 1.0
    phantom: str = "shepp-logan"
    solver: dict = field(default_factory=dict)
    # solver entries given in units of 1 / ||A||^2
    operator_relative: tuple[str, ...] = ("beta", "q")
    reg_R: RegularizerConfig = field(default_factory=RegularizerConfig)
    reg_Q: RegularizerConfig = field(default_factory=lambda: RegularizerConfig("sinogram-fd", 0.1))
    init: str = "zero-fill-fbp"
    init_map_path: str | None = None
    lipschitz_samples: int = 100
    init_train: InitTrainConfig = field(default_factory=InitTrainConfig)
    stability: StabilityConfig = field(default_factory=StabilityConfig)
    seed: int = 0
    out: str = "out"

    def validate(self) -> "RunConfig":
        try:
            g = self.geometry.build()
            ViewSelector(self.rate, self.offset).indices(g.n_views)
            if self.offset != 0 and self.init != "zero-fill-fbp":
                raise ConfigError("sinogram completion assumes acquired views at offset 0")
            if not self.lam > 0:
                raise ConfigError("lam must be positive")
            if self.phantom not in PHANTOMS:
                raise ConfigError(f"phantom must be one of {PHANTOMS}")
            if self.init not in INIT_MODES:
                raise ConfigError(f"init must be one of {INIT_MODES}")
            if self.init == "learned" and not self.init_map_path:
                raise ConfigError("init 'learned' needs init_map_path")
            unknown = set(self.operator_relative) - {f.name for f in dataclasses.fields(SolverParams)}
            if unknown:
                raise ConfigError(f"operator_relative names unknown solver fields {sorted(unknown)}")
            SolverParams.from_dict({k: 1e-3 if k in self.operator_relative else v for k, v in self.solver.items()})
            for reg in (self.reg_R, self.reg_Q):
                if reg.kind not in ("tv", "sinogram-fd", "random", "file"):
                    raise ConfigError(f"unknown regularizer kind {reg.kind!r}")
            if self.lipschitz_samples < 2:
                raise ConfigError("lipschitz_samples must be at least 2")
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    # builders ---------------------------------------------------------------

    def build_geometry(self) -> Geometry:
        return self.geometry.build()

    def build_selector(self) -> ViewSelector:
        return ViewSelector(self.rate, self.offset)

    def build_params(self, geom: Geometry | None = None) -> SolverParams:
        values = dict(self.solver)
        rel = [k for k in self.operator_relative if k in values]
        if rel:
            norm = operator_norm_sq(geom or self.build_geometry())
            for k in rel:
                values[k] = values[k] / norm
        return SolverParams.from_dict(values)

    def build_phantom(self) -> np.ndarray:
        n = self.geometry.image_size
        if self.phantom == "shepp-logan":
            return shepp_logan(n)
        return random_ellipses_phantom(n, np.random.default_rng(self.seed))

    def build_problem(self, s0) -> Problem:
        g = self.build_geometry()
        model = FidelityModel(g, self.build_selector(), s0, self.lam)
        return Problem(model, self.reg_R.build("image"), self.reg_Q.build("sinogram"))

    def build_map(self) -> ViewAdvanceMap | None:
        if self.init == "interpolation":
            return interpolation_map(self.build_geometry(), self.rate)
        if self.init == "learned":
            if not Path(self.init_map_path).with_suffix(".json").exists():
                raise ConfigError(f"init map {self.init_map_path} not found")
            m = load_map(self.init_map_path)
            if m.geometry != self.build_geometry() or m.rate != self.rate:
                raise ConfigError("learned map geometry or rate does not match the run")
            return m
        return None

    def initial_pair(self, s0):
        """(x0, z0); zero-fill uses FBP of the embedded sparse sinogram weighted by the acquired views."""
        from .initnet import init_pair

        g, sel = self.build_geometry(), self.build_selector()
        m = self.build_map()
        if m is None:
            return sparse_fbp(s0, g, sel), embed_views(s0, sel, g.n_views)
        z, x = init_pair(m, s0, self.rate, g)
        return x, z

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# --- dict / JSON loading ------------------------------------------------------

def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        tp = hints[key]
        if dataclasses.is_dataclass(tp):
            kwargs[key] = _build(tp, value, f"{where}.{key}")
        elif typing.get_origin(tp) is tuple and isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data) -> RunConfig:
    return _build(RunConfig, data, "config").validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


DEFAULT_SOLVER = {
    "alpha": 0.5,
    "beta": 1.0,
    "p": 0.5,
    "q": 1.0,
    "bar_alpha": 0.9,
    "bar_beta": 0.9,
    "sigma": 100.0,
    "eps0": 1.0,
    "eps_tol": 1e-4,
    "max_outer_iters": 800,
}


def default_config(**overrides) -> RunConfig:
    """128x128 Shepp-Logan, 64 of 128 views, smoothed TV on the image and sinogram differences."""
    cfg = RunConfig(solver=dict(DEFAULT_SOLVER))
    return dataclasses.replace(cfg, **overrides).validate()
