"""Run configuration: INI-style sections, validated in one pass.

Sections and keys (all optional, defaults shown by ``RunConfig().to_ini()``):

    [grid]        L, N
    [model]       problem (P or Q), potential, V0, p_V, nonlinearity, p, beta,
                  mu, theta, m0, a, sigma
    [solver]      tol, residual_tol, ray_tol, nehari_tol, max_iter, restarts,
                  path_points
    [experiment]  k_list, alpha_list, q_list, moser_L, moser_N
    [output]      out, seed, workers

Any problem found while parsing or validating is collected, and a single
``ConfigError`` lists all of them.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field, fields
from typing import List, Optional, Tuple

from .errors import ConfigError, DomainError
from .grid_spectral import Grid1D
from .model import (NONLINEARITY_KINDS, POTENTIAL_KINDS, KirchhoffSpec, ModelSpec, NonlinearitySpec,
                    PotentialSpec)


@dataclass(frozen=True)
class GridConfig:
    L: float = 40.0
    N: int = 4096


@dataclass(frozen=True)
class ModelConfig:
    problem: str = "P"
    potential: str = "polynomial"
    V0: float = 1.0
    p_V: float = 2.0
    nonlinearity: str = "exp"
    p: Optional[float] = None  # 3 for P, 4 for Q
    beta: Optional[float] = None
    mu: Optional[float] = None
    theta: Optional[float] = None
    m0: float = 1.0
    a: float = 1.0
    sigma: float = 1.0


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    residual_tol: float = 1e-5
    ray_tol: float = 1e-8
    nehari_tol: float = 1e-10
    max_iter: int = 3000
    restarts: int = 3
    path_points: int = 16


@dataclass(frozen=True)
class ExperimentConfig:
    k_list: Tuple[int, ...] = (8, 64, 512)
    alpha_list: Tuple[float, ...] = (0.5 * math.pi, 0.9 * math.pi, 1.1 * math.pi, 1.2 * math.pi)
    q_list: Tuple[float, ...] = (2.0, 4.0, 8.0)
    moser_L: float = 8.0
    moser_N: int = 65536


@dataclass(frozen=True)
class OutputConfig:
    out: str = "out"
    seed: int = 0
    workers: int = 1


SECTIONS = {
    "grid": GridConfig,
    "model": ModelConfig,
    "solver": SolverConfig,
    "experiment": ExperimentConfig,
    "output": OutputConfig,
}


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    # -- serialisation ---------------------------------------------------
    def to_ini(self) -> str:
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            sec = getattr(self, name)
            for f in fields(sec):
                lines.append(f"{f.name} = {_format(getattr(sec, f.name))}")
            lines.append("")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {name: {f.name: _jsonable(getattr(getattr(self, name), f.name))
                       for f in fields(getattr(self, name))} for name in SECTIONS}

    def replace(self, section: str, **changes) -> "RunConfig":
        new = dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **changes)})
        problems = validate(new)
        if problems:
            raise ConfigError(problems)
        return new

    # -- derived objects ---------------------------------------------------
    def make_grid(self) -> Grid1D:
        return Grid1D(self.grid.L, self.grid.N)

    def make_moser_grid(self) -> Grid1D:
        return Grid1D(self.experiment.moser_L, self.experiment.moser_N)

    def make_model(self, problem: Optional[str] = None) -> ModelSpec:
        m = self.model
        problem = problem or m.problem
        pot = PotentialSpec(m.potential, m.V0, m.p_V)
        if problem == "P":
            p = 3.0 if m.p is None else m.p
            nl = NonlinearitySpec(m.nonlinearity, p=p, beta=m.beta, mode="h", mu=m.mu)
            return ModelSpec(pot, nl)
        p = 4.0 if m.p is None else m.p
        nl = NonlinearitySpec(m.nonlinearity, p=p, beta=m.beta, mode="f", theta=m.theta)
        return ModelSpec(pot, nl, KirchhoffSpec(m0=m.m0, a=m.a, sigma=m.sigma))


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


def _convert(raw: str, default, name: str, hint):
    raw = raw.strip()
    if isinstance(default, tuple) or "Tuple" in str(hint):
        elem = int if "int" in str(hint) else float
        if not raw:
            return ()
        return tuple(elem(float(x)) if elem is int and float(x).is_integer() else elem(x)
                     for x in (s.strip() for s in raw.split(",")) if x)
    if "Optional" in str(hint):
        return None if raw.lower() in ("", "none") else float(raw)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        val = float(raw)
        if not val.is_integer():
            raise ValueError(f"{name} must be an integer")
        return int(val)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_ini(text: str) -> RunConfig:
    """Parse and validate; raises ConfigError listing every problem."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keys such as L, N, V0 are case sensitive
    problems: List[str] = []
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"unreadable config: {exc}"]) from exc
    built = {}
    for sec in cp.sections():
        if sec not in SECTIONS:
            problems.append(f"unknown section [{sec}]")
    for name, cls in SECTIONS.items():
        base = cls()
        hints = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        if cp.has_section(name):
            for key, raw in cp.items(name):
                if key not in hints:
                    problems.append(f"unknown key {name}.{key}")
                    continue
                try:
                    kwargs[key] = _convert(raw, getattr(base, key), f"{name}.{key}", hints[key])
                except ValueError as exc:
                    problems.append(f"{name}.{key}: cannot parse {raw!r} ({exc})")
        built[name] = dataclasses.replace(base, **kwargs)
    cfg = RunConfig(**built)
    problems.extend(validate(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def load(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    return parse_ini(text)


def _finite(v) -> bool:
    return isinstance(v, (int, float)) and math.isfinite(v)


def validate(cfg: RunConfig) -> List[str]:
    """Every violation in the config, as human-readable strings."""
    out: List[str] = []
    g, m, s, e, o = cfg.grid, cfg.model, cfg.solver, cfg.experiment, cfg.output
    if not (_finite(g.L) and g.L > 0):
        out.append(f"grid.L must be positive, got {g.L}")
    if not (isinstance(g.N, int) and g.N > 0 and g.N % 2 == 0):
        out.append(f"grid.N must be a positive even integer, got {g.N}")
    if m.problem not in ("P", "Q"):
        out.append(f"model.problem must be P or Q, got {m.problem!r}")
    if m.potential not in POTENTIAL_KINDS:
        out.append(f"model.potential must be one of {POTENTIAL_KINDS}, got {m.potential!r}")
    if not (_finite(m.V0) and m.V0 > 0):
        out.append(f"model.V0 must be positive, got {m.V0}")
    if not (_finite(m.p_V) and m.p_V > 0):
        out.append(f"model.p_V must be positive, got {m.p_V}")
    if m.nonlinearity not in NONLINEARITY_KINDS:
        out.append(f"model.nonlinearity must be one of {NONLINEARITY_KINDS}, got {m.nonlinearity!r}")
    if m.beta is not None and not _finite(m.beta):
        out.append(f"model.beta must be finite, got {m.beta}")
    for key in ("p", "mu", "theta"):
        v = getattr(m, key)
        if v is not None and not (_finite(v) and v > 0):
            out.append(f"model.{key} must be positive, got {v}")
    if not (_finite(m.m0) and m.m0 > 0):
        out.append(f"model.m0 must be positive, got {m.m0}")
    if not (_finite(m.a) and m.a >= 0):
        out.append(f"model.a must be non-negative, got {m.a}")
    if not (_finite(m.sigma) and m.sigma > 0):
        out.append(f"model.sigma must be positive, got {m.sigma}")
    for key in ("tol", "residual_tol", "ray_tol", "nehari_tol"):
        v = getattr(s, key)
        if not (_finite(v) and v > 0):
            out.append(f"solver.{key} must be positive, got {v}")
    if not (isinstance(s.max_iter, int) and s.max_iter >= 1):
        out.append(f"solver.max_iter must be a positive integer, got {s.max_iter}")
    if not (isinstance(s.restarts, int) and s.restarts >= 1):
        out.append(f"solver.restarts must be a positive integer, got {s.restarts}")
    if not (isinstance(s.path_points, int) and s.path_points >= 16):
        out.append(f"solver.path_points must be an integer >= 16, got {s.path_points}")
    if len(e.k_list) == 0:
        out.append("experiment.k_list must not be empty")
    if any((not isinstance(k, int)) or k < 2 for k in e.k_list):
        out.append(f"experiment.k_list entries must be integers >= 2, got {e.k_list}")
    if any(not (_finite(a) and a > 0) for a in e.alpha_list):
        out.append(f"experiment.alpha_list entries must be positive, got {e.alpha_list}")
    if any(not (_finite(q) and q >= 2) for q in e.q_list):
        out.append(f"experiment.q_list entries must be >= 2, got {e.q_list}")
    if not (_finite(e.moser_L) and e.moser_L > 1):
        out.append(f"experiment.moser_L must exceed 1, got {e.moser_L}")
    if not (isinstance(e.moser_N, int) and e.moser_N > 0 and e.moser_N % 2 == 0):
        out.append(f"experiment.moser_N must be a positive even integer, got {e.moser_N}")
    elif _finite(e.moser_L) and e.moser_L > 1 and e.k_list and all(isinstance(k, int) for k in e.k_list):
        dx = 2 * e.moser_L / e.moser_N
        kmax = max(e.k_list)
        if dx > 1.0 / (4 * kmax) * (1 + 1e-12):
            out.append(f"experiment grid dx = {dx:.3e} does not resolve k = {kmax} (need dx <= 1/(4k))")
    if not o.out:
        out.append("output.out must be a non-empty path")
    if not isinstance(o.seed, int):
        out.append(f"output.seed must be an integer, got {o.seed}")
    if not (isinstance(o.workers, int) and o.workers >= 1):
        out.append(f"output.workers must be a positive integer, got {o.workers}")
    if not out:
        # model-level constraints (e.g. mode/parameter compatibility)
        for prob in ("P", "Q"):
            try:
                cfg.make_model(prob)
            except DomainError as exc:
                out.append(f"model ({prob}): {exc}")
    return out
