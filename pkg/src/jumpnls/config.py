"""INI run configuration with [grid], [solver], [noise] and [experiment] blocks."""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .grid import Grid
from .noise import CoefficientPair, IntensitySpec, InfeasibleIntensityError
from .nls import SolverConfig, gaussian, min_delta, single_mode

__all__ = ["ConfigError", "ExperimentSettings", "RunConfig", "load_config", "parse_config", "DEFAULT_INI"]


class ConfigError(ValueError):
    pass


DEFAULT_INI = """\
[grid]
d = 1
N = 256
L = 6.283185307179586

[solver]
alpha = 3
lam = 1
nonlinearity_sign = 1
dt = 1e-3
T = 1
delta = 0.5
snapshot_every = 10
blowup_threshold = 1e6
u0_kind = gaussian
u0_amplitude = 1.4
u0_width = 0.7
u0_mode = 1

[noise]
kind = bump
beta = 0.5
a_max = 1
w_min = 0.3
w_max = 0.8
rate_scale = 1
layer = 10
c_g = 1
c_h = 1

[experiment]
ensemble = 200
seed = 20240601
second_seed = 20240602
significance = 0.01
prm_samples = 10000
prm_rate = 5
workers = 1
m_values = 2, 5, 10
epsilons = 1e-3, 1e-4, 1e-5
gronwall_m = 5
gronwall_trajectories = 8
uniqueness_trajectories = 100
perturbed_c_g = 2
haar_levels = 1, 2, 3, 4, 5, 6, 7, 8, 9, 10
out = runs
"""


@dataclass(frozen=True)
class ExperimentSettings:
    ensemble: int = 200
    seed: int = 20240601
    second_seed: int = 20240602
    significance: float = 0.01
    prm_samples: int = 10000
    prm_rate: float = 5.0
    workers: int = 1
    m_values: tuple = (2.0, 5.0, 10.0)
    epsilons: tuple = (1e-3, 1e-4, 1e-5)
    gronwall_m: float = 5.0
    gronwall_trajectories: int = 8
    uniqueness_trajectories: int = 100
    perturbed_c_g: float = 2.0
    haar_levels: tuple = tuple(range(1, 11))
    out: str = "runs"


@dataclass(frozen=True)
class RunConfig:
    solver: SolverConfig
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    u0_kind: str = "gaussian"
    u0_amplitude: float = 1.0
    u0_width: float = 0.7
    u0_mode: int = 1
    c_g: float = 1.0
    c_h: float = 1.0
    text: str = ""  # canonical form, the input to the config hash

    @property
    def grid(self) -> Grid:
        return self.solver.grid

    def initial_field(self) -> np.ndarray:
        if self.u0_kind == "gaussian":
            return gaussian(self.grid, self.u0_amplitude, self.u0_width)
        return single_mode(self.grid, self.u0_mode, self.u0_amplitude)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()[:16]

    def with_solver(self, **changes) -> "RunConfig":
        return replace(self, solver=replace(self.solver, **changes))

    def with_experiment(self, **changes) -> "RunConfig":
        return replace(self, experiment=replace(self.experiment, **changes))

    def with_coefficients(self, c_g: float, c_h: Optional[float] = None) -> "RunConfig":
        c_h = self.c_h if c_h is None else c_h
        return replace(self, c_g=c_g, c_h=c_h,
                       solver=replace(self.solver, pair=CoefficientPair.linear(c_g, c_h)))


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _canonical(cp: configparser.ConfigParser) -> str:
    lines = []
    for sec in sorted(cp.sections()):
        lines.append(f"[{sec}]")
        lines += [f"{k} = {v}" for k, v in sorted(cp.items(sec))]
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> RunConfig:
    """Defaults overlaid by ``text``; raises ConfigError on any invalid entry."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(DEFAULT_INI)
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    unknown = set(cp.sections()) - {"grid", "solver", "noise", "experiment"}
    if unknown:
        raise ConfigError(f"unknown blocks {sorted(unknown)}")
    try:
        g, s, n, e = cp["grid"], cp["solver"], cp["noise"], cp["experiment"]
        grid = Grid(g.getint("d"), g.getint("N"), g.getfloat("L"))
        kind = n.get("kind").strip().lower()
        if kind not in ("bump", "none"):
            raise ConfigError(f"unknown noise kind {kind!r}")
        c_g, c_h = n.getfloat("c_g"), n.getfloat("c_h")
        spec = None
        if kind == "bump":
            spec = IntensitySpec(beta=n.getfloat("beta"), a_max=n.getfloat("a_max"),
                                 w_min=n.getfloat("w_min"), w_max=n.getfloat("w_max"),
                                 rate_scale=n.getfloat("rate_scale"), box_length=grid.L, dim=grid.d)
        solver = SolverConfig(
            alpha=s.getfloat("alpha"), lam=s.getfloat("lam"),
            nonlinearity_sign=s.getfloat("nonlinearity_sign"), dt=s.getfloat("dt"), T=s.getfloat("T"),
            grid=grid, noise=spec, layer=n.getint("layer"), pair=CoefficientPair.linear(c_g, c_h),
            seed=e.getint("seed"), delta=s.getfloat("delta"), snapshot_every=s.getint("snapshot_every"),
            blowup_threshold=s.getfloat("blowup_threshold"))
        exp = ExperimentSettings(
            ensemble=e.getint("ensemble"), seed=e.getint("seed"), second_seed=e.getint("second_seed"),
            significance=e.getfloat("significance"), prm_samples=e.getint("prm_samples"),
            prm_rate=e.getfloat("prm_rate"), workers=e.getint("workers"),
            m_values=_floats(e.get("m_values")), epsilons=_floats(e.get("epsilons")),
            gronwall_m=e.getfloat("gronwall_m"), gronwall_trajectories=e.getint("gronwall_trajectories"),
            uniqueness_trajectories=e.getint("uniqueness_trajectories"),
            perturbed_c_g=e.getfloat("perturbed_c_g"),
            haar_levels=tuple(int(x) for x in _floats(e.get("haar_levels"))), out=e.get("out"))
        u0_kind = s.get("u0_kind").strip().lower()
        if u0_kind not in ("gaussian", "single_mode"):
            raise ConfigError(f"unknown u0_kind {u0_kind!r}")
        cfg = RunConfig(solver, exp, u0_kind, s.getfloat("u0_amplitude"), s.getfloat("u0_width"),
                        s.getint("u0_mode"), c_g, c_h, _canonical(cp))
    except ConfigError:
        raise
    except (ValueError, KeyError, InfeasibleIntensityError) as exc:
        raise ConfigError(str(exc)) from None
    if exp.seed == exp.second_seed:
        raise ConfigError("seed and second_seed must differ")
    if exp.workers < 1 or exp.ensemble < 1:
        raise ConfigError("workers and ensemble must be positive")
    if not 0 < exp.significance < 1:
        raise ConfigError("significance must lie in (0, 1)")
    if solver.alpha > 1 and solver.delta < min_delta(grid.d, solver.alpha):
        raise ConfigError(f"delta={solver.delta} is below the bound {min_delta(grid.d, solver.alpha)}")
    return cfg


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return parse_config("")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_config(p.read_text())
