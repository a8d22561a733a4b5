"""Flat ``key = value`` run configuration with dotted keys.

Example::

    problem = lqr1d
    grid.dx = 0.05
    grid.alpha = 0.5
    study.resolutions = 0.1, 0.05, 0.025, 0.0125

Blank lines and ``#`` comments are ignored.  Unknown keys are an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .analysis import Region
from .grid import GridSpec, grid_from_steps, make_grid
from .minimize import MinimizerOptions
from .problems import ControlProblem, ObstacleParams, lqr_problem, obstacle_problem

PROBLEMS = ("lqr1d", "obstacle2d")

# per-problem defaults for the (dx, alpha) parameterisation
GRID_DEFAULTS = {
    "lqr1d": {"dim": 1, "dx": 0.05, "alpha": 0.5},
    "obstacle2d": {"dim": 2, "dx": 0.05, "alpha": 0.1},
}
STUDY_DEFAULTS = {
    "lqr1d": (0.1, 0.05, 0.025, 0.0125),
    "obstacle2d": (0.1, 0.05),
}

_OBSTACLE_PAIRS = {"b", "r", "q", "q_t", "sigma_o", "sigma_i", "x_target", "x_obstacle", "input_lower", "input_upper"}
_OBSTACLE_SCALARS = {"s", "s_t", "c"}

_KNOWN = {
    "problem",
    "grid.half_width", "grid.n_space", "grid.horizon", "grid.n_time", "grid.dx", "grid.alpha",
    "minimizer.method", "minimizer.scan_points", "minimizer.refine_tolerance",
    "study.resolutions", "study.region", "study.reference_dx", "study.reference_dt", "study.dt_ratio",
    "output.directory", "output.formats", "output.stride",
    "seed", "force_cfl", "verify.trials", "parallel.workers", "rollout.x0",
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def parse_text(text: str) -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def _float(key, value) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _int(key, value) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _floats(key, value) -> tuple[float, ...]:
    parts = [p for p in value.replace(";", ",").split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers")
    return tuple(_float(key, p.strip()) for p in parts)


def _bool(key, value) -> bool:
    lowered = value.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


@dataclass
class RunConfig:
    problem: str = "lqr1d"
    problem_params: dict = field(default_factory=dict)
    half_width: float = 1.0
    horizon: float = 1.0
    n_space: Optional[int] = None
    n_time: Optional[int] = None
    dx: Optional[float] = None
    alpha: Optional[float] = None
    minimizer: MinimizerOptions = field(default_factory=MinimizerOptions)
    resolutions: Optional[tuple[float, ...]] = None
    region: Optional[tuple[float, float]] = None
    full_region: bool = False
    reference_dx: float = 0.02
    reference_dt: float = 0.002
    dt_ratio: float = 0.1
    output_directory: Optional[str] = None
    formats: tuple[str, ...] = ("csv", "json")
    stride: int = 1
    seed: int = 0
    force_cfl: bool = False
    trials: int = 100
    workers: int = 1
    x0: Optional[tuple[float, ...]] = None
    raw: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return GRID_DEFAULTS[self.problem]["dim"]

    def build_problem_params(self) -> ObstacleParams:
        try:
            return ObstacleParams(**self.problem_params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"problem parameters: {exc}") from None

    def build_problem(self) -> ControlProblem:
        if self.problem == "lqr1d":
            return lqr_problem(self.horizon)
        try:
            return obstacle_problem(self.build_problem_params())
        except ValueError as exc:
            raise ConfigError(f"problem parameters: {exc}") from None

    def build_grid(self) -> GridSpec:
        try:
            if self.n_space is not None:
                return make_grid(self.dim, self.half_width, self.n_space, self.horizon, self.n_time)
            defaults = GRID_DEFAULTS[self.problem]
            dx = self.dx if self.dx is not None else defaults["dx"]
            alpha = self.alpha if self.alpha is not None else defaults["alpha"]
            return grid_from_steps(self.dim, self.half_width, dx, self.horizon, alpha * dx)
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from None

    def study_resolutions(self) -> tuple[float, ...]:
        return self.resolutions if self.resolutions is not None else STUDY_DEFAULTS[self.problem]

    def study_region(self) -> Region:
        if self.full_region:
            return Region()
        if self.region is not None:
            return Region(*self.region)
        return Region.interior(self.half_width) if self.problem == "lqr1d" else Region()

    def echo(self) -> dict:
        """Config keys exactly as given."""
        return dict(self.raw)


def build_config(raw: dict[str, str]) -> RunConfig:
    cfg = RunConfig(raw=dict(raw))
    params: dict = {}
    minimizer: dict = {}
    for key, value in raw.items():
        if key.startswith("problem."):
            name = key[len("problem."):]
            if name in _OBSTACLE_PAIRS:
                pair = _floats(key, value)
                if len(pair) != 2:
                    raise ConfigError(f"{key}: expected two numbers")
                params[name] = pair
            elif name in _OBSTACLE_SCALARS:
                params[name] = _float(key, value)
            else:
                raise ConfigError(f"unknown problem parameter {key!r}")
            continue
        if key not in _KNOWN:
            raise ConfigError(f"unknown key {key!r}")
        if key == "problem":
            if value not in PROBLEMS:
                raise ConfigError(f"problem: expected one of {PROBLEMS}, got {value!r}")
            cfg.problem = value
        elif key in ("grid.half_width", "grid.horizon", "grid.dx", "grid.alpha"):
            setattr(cfg, key.split(".")[1], _float(key, value))
        elif key in ("grid.n_space", "grid.n_time"):
            setattr(cfg, key.split(".")[1], _int(key, value))
        elif key == "minimizer.method":
            minimizer["method"] = value
        elif key == "minimizer.scan_points":
            minimizer["scan_points"] = _int(key, value)
        elif key == "minimizer.refine_tolerance":
            minimizer["refine_tolerance"] = _float(key, value)
        elif key == "study.resolutions":
            cfg.resolutions = _floats(key, value)
        elif key == "study.region":
            if value.lower() == "full":
                cfg.full_region = True
            else:
                bounds = _floats(key, value)
                if len(bounds) != 2 or bounds[0] >= bounds[1]:
                    raise ConfigError(f"{key}: expected 'x_lo, x_hi' with x_lo < x_hi, or 'full'")
                cfg.region = bounds
        elif key in ("study.reference_dx", "study.reference_dt", "study.dt_ratio"):
            setattr(cfg, key.split(".")[1], _float(key, value))
        elif key == "output.directory":
            cfg.output_directory = value
        elif key == "output.formats":
            formats = tuple(p.strip() for p in value.split(",") if p.strip())
            if not formats or any(f not in ("csv", "json") for f in formats):
                raise ConfigError(f"{key}: expected a subset of csv, json")
            cfg.formats = formats
        elif key == "output.stride":
            cfg.stride = _int(key, value)
        elif key == "seed":
            cfg.seed = _int(key, value)
        elif key == "force_cfl":
            cfg.force_cfl = _bool(key, value)
        elif key == "verify.trials":
            cfg.trials = _int(key, value)
        elif key == "parallel.workers":
            cfg.workers = _int(key, value)
        elif key == "rollout.x0":
            cfg.x0 = _floats(key, value)
    if params and cfg.problem != "obstacle2d":
        raise ConfigError("problem parameters are only accepted for obstacle2d")
    cfg.problem_params = params
    try:
        cfg.minimizer = MinimizerOptions(**minimizer)
    except ValueError as exc:
        raise ConfigError(f"minimizer: {exc}") from None

    by_count = cfg.n_space is not None or cfg.n_time is not None
    by_step = cfg.dx is not None or cfg.alpha is not None
    if by_count and by_step:
        raise ConfigError("grid: give either n_space/n_time or dx/alpha, not both")
    if by_count and (cfg.n_space is None or cfg.n_time is None):
        raise ConfigError("grid: n_space and n_time must be given together")
    if cfg.stride < 1:
        raise ConfigError("output.stride: must be at least 1")
    if cfg.trials < 1:
        raise ConfigError("verify.trials: must be at least 1")
    if cfg.workers < 1:
        raise ConfigError("parallel.workers: must be at least 1")
    # resolve once so that grid and parameter errors surface as config errors
    cfg.build_grid()
    cfg.build_problem()
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return build_config({})
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return build_config(parse_text(text))


__all__ = ["RunConfig", "ConfigError", "parse_text", "build_config", "load_config"]
