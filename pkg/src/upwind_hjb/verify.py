"""Seeded randomised checks of the scheme's structural properties.

Each check reports the worst margin over its trials: the smallest value of
``rhs - lhs`` for an inequality ``lhs <= rhs`` (or ``-|lhs - rhs|`` for an
identity).  A check passes when the worst margin is at least ``-SLACK``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .conservation import (
    correspondence_error,
    derivative_step,
    evolve_derivative,
    flux_lipschitz_probe,
    source_variation,
    total_variation,
)
from .grid import GridSpec
from .minimize import MinimizerOptions
from .problems import ControlProblem
from .upwind import check_cfl, solve, step_backward

SLACK = 1e-12
CORRESPONDENCE_TOL = 1e-12


@dataclass
class PropertyResult:
    name: str
    trials: int
    worst_margin: float
    passed: bool
    skipped: Optional[str] = None
    counterexample: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "trials": self.trials,
            "worst_margin": self.worst_margin,
            "passed": self.passed,
            "skipped": self.skipped,
            "counterexample": self.counterexample,
        }


@dataclass
class _Tracker:
    name: str
    trials: int = 0
    worst: float = np.inf
    counterexample: Optional[dict] = None

    def record(self, margin: float, make_counterexample: Callable[[], dict]) -> None:
        self.trials += 1
        if margin < self.worst:
            self.worst = margin
        if margin < -SLACK and self.counterexample is None:
            self.counterexample = {"trial": self.trials - 1, "margin": margin, **make_counterexample()}

    def result(self) -> PropertyResult:
        worst = float(self.worst) if self.trials else float("nan")
        return PropertyResult(self.name, self.trials, worst, self.trials > 0 and worst >= -SLACK,
                              counterexample=self.counterexample)


def _skipped(name: str, reason: str) -> PropertyResult:
    return PropertyResult(name, 0, float("nan"), True, skipped=reason)


def random_field(rng: np.random.Generator, grid: GridSpec, base: np.ndarray | None = None) -> np.ndarray:
    """Rough, smooth or mixed random field, chosen at random."""
    kind = rng.integers(3)
    shape = grid.shape
    if kind == 0:
        field_ = rng.uniform(-1.0, 1.0, shape)
    else:
        x = grid.nodes()
        field_ = np.zeros(shape)
        for _ in range(3):
            k = rng.integers(1, 4, size=grid.dim)
            phase = rng.uniform(0, 2 * np.pi)
            field_ += rng.normal() * np.cos(np.pi * np.sum(k * x, axis=-1) + phase)
        if kind == 2:
            field_ += 0.1 * rng.uniform(-1.0, 1.0, shape)
    return field_ if base is None else base + field_


def random_gap(rng: np.random.Generator, grid: GridSpec) -> np.ndarray:
    """Nonnegative perturbation: either dense noise or a single-node bump."""
    if rng.integers(2) == 0:
        return rng.uniform(0.0, 1.0, grid.shape)
    gap = np.zeros(grid.shape)
    gap[tuple(rng.integers(grid.n_nodes, size=grid.dim))] = rng.uniform(0.1, 1.0)
    return gap


def _arr(a) -> list:
    return np.asarray(a).tolist()


def check_monotonicity(problem, grid, rng, trials, options=None) -> PropertyResult:
    """``V >= W`` pointwise implies ``F[V] >= F[W]`` pointwise."""
    tr = _Tracker("monotonicity")
    for _ in range(trials):
        w = random_field(rng, grid)
        v = w + random_gap(rng, grid)
        fv, _ = step_backward(problem, grid, v, options)
        fw, _ = step_backward(problem, grid, w, options)
        margin = float(np.min(fv - fw))
        tr.record(margin, lambda: {"V": _arr(v), "W": _arr(w), "node": _arr(np.unravel_index(np.argmin(fv - fw), grid.shape))})
    return tr.result()


def check_constant_shift(problem, grid, rng, trials, options=None) -> PropertyResult:
    """``F[V - c] = F[V] - c``."""
    tr = _Tracker("constant_shift")
    for _ in range(trials):
        v = random_field(rng, grid)
        c = float(rng.uniform(-5.0, 5.0))
        fv, _ = step_backward(problem, grid, v, options)
        fs, _ = step_backward(problem, grid, v - c, options)
        margin = -float(np.max(np.abs(fs - (fv - c))))
        tr.record(margin, lambda: {"V": _arr(v), "c": c})
    return tr.result()


def check_comparison(problem, grid, rng, trials, options=None) -> PropertyResult:
    """``sup(F[V] - F[W]) <= sup(V - W)`` for arbitrary ``V``, ``W``."""
    tr = _Tracker("comparison")
    for _ in range(trials):
        v = random_field(rng, grid)
        w = random_field(rng, grid)
        fv, _ = step_backward(problem, grid, v, options)
        fw, _ = step_backward(problem, grid, w, options)
        margin = float(np.max(v - w) - np.max(fv - fw))
        tr.record(margin, lambda: {"V": _arr(v), "W": _arr(w)})
    return tr.result()


def check_stability(problem, grid, rng, trials, options=None, force=False) -> PropertyResult:
    """Terminal perturbations never grow backward in time (sup norm)."""
    tr = _Tracker("stability")
    base = solve(problem, grid, options, force=force)
    terminal = base.value[-1]
    for _ in range(trials):
        e = random_field(rng, grid)
        other = solve(problem, grid, options, force=force, terminal=terminal + e)
        sup = np.max(np.abs(other.value - base.value).reshape(grid.n_time + 1, -1), axis=1)
        growth = sup[:-1] - sup[1:]
        margin = -float(np.max(growth))
        tr.record(margin, lambda: {"perturbation": _arr(e), "slice": int(np.argmax(growth))})
    return tr.result()


def check_derivative_monotonicity(problem, grid, rng, trials) -> PropertyResult:
    """With a shared policy slice, ``U >= U~`` implies the same after one step (both sides).

    One-dimensional only: in 2-D the component ``U_d`` picks up
    ``-alpha * f_k^+`` times ``U_k`` (``k != d``) through the summed flux, so
    componentwise order is not preserved.
    """
    tr = _Tracker("derivative_monotonicity")
    if grid.dim != 1:
        return _skipped(tr.name, "one-dimensional check; axes couple through the summed flux")
    if not check_cfl(problem, grid).satisfies_modified:
        return _skipped(tr.name, "modified CFL condition fails")
    lo = np.asarray(problem.input_set.lower)
    hi = np.asarray(problem.input_set.upper)
    nodes = grid.nodes()
    for _ in range(trials):
        policy = rng.uniform(lo, hi, (*grid.shape, problem.control_dim))
        u_low = rng.uniform(-2.0, 2.0, (*grid.shape, grid.dim))
        u_high = u_low + np.stack([random_gap(rng, grid) for _ in range(grid.dim)], axis=-1)
        for side in ("plus", "minus"):
            a = derivative_step(problem, grid, u_high, policy, side, nodes)
            b = derivative_step(problem, grid, u_low, policy, side, nodes)
            margin = float(np.min(a - b))
            tr.record(margin, lambda: {"side": side, "U": _arr(u_high), "U_tilde": _arr(u_low), "policy": _arr(policy)})
    return tr.result()


def check_flux_lipschitz(problem, grid, rng, trials, result) -> PropertyResult:
    """Numerical flux is Lipschitz with constant ``sup|f|`` (1-D)."""
    tr = _Tracker("flux_lipschitz")
    if grid.dim != 1:
        return _skipped(tr.name, "one-dimensional check")
    bound = problem.sup_speed[0] * (1 + 1e-9)
    for _ in range(trials):
        j = int(rng.integers(grid.n_time + 1))
        samples = rng.uniform(-3.0, 3.0, (32, 3))
        ratio = flux_lipschitz_probe(problem, grid, result.policy[j], samples)
        tr.record(bound - ratio, lambda: {"slice": j, "samples": _arr(samples), "ratio": ratio})
    return tr.result()


def check_correspondence(result) -> PropertyResult:
    """Evolved difference fields reproduce the differences of the value field."""
    report = correspondence_error(result)
    worst = max(r["relative"] for r in report.values())
    margin = CORRESPONDENCE_TOL - worst
    passed = margin >= 0
    return PropertyResult(
        "derivative_correspondence", 1, margin, passed,
        counterexample=None if passed else {"deviation": report},
    )


def check_total_variation(problem, grid, result) -> PropertyResult:
    """``TV(U_{j-1}) <= TV(U_j) + source variation`` for both one-sided fields (1-D).

    The source variation vanishes when the running cost has no state
    dependence, which makes this the plain TVD property.
    """
    tr = _Tracker("total_variation")
    if grid.dim != 1:
        return _skipped(tr.name, "one-dimensional check")
    if not check_cfl(problem, grid).satisfies_modified:
        return _skipped(tr.name, "modified CFL condition fails")
    try:
        allowance = source_variation(problem, grid)
    except ValueError as exc:
        return _skipped(tr.name, str(exc))
    for side in ("plus", "minus"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            u = evolve_derivative(problem, grid, result.policy, side).values
        tv = np.array([total_variation(u[j], 1) for j in range(grid.n_time + 1)])
        for j in range(grid.n_time, 0, -1):
            margin = float(tv[j] + allowance - tv[j - 1])
            tr.record(margin, lambda: {"side": side, "slice": j, "tv": [tv[j - 1], tv[j]], "allowance": allowance})
    return tr.result()


@dataclass
class SuiteReport:
    seed: int
    grid: dict
    cfl: dict
    forced: bool
    properties: list[PropertyResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.properties)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "grid": self.grid,
            "cfl": self.cfl,
            "forced": self.forced,
            "passed": self.passed,
            "properties": [p.to_dict() for p in self.properties],
        }


def run_suite(
    problem: ControlProblem,
    grid: GridSpec,
    *,
    trials: int = 100,
    seed: int = 0,
    options: MinimizerOptions | None = None,
    force: bool = False,
) -> SuiteReport:
    """Run every applicable property with its own seeded stream."""
    cfl = check_cfl(problem, grid)
    forced = force and not cfl.satisfies_strict
    report = SuiteReport(seed, grid.to_dict(), cfl.to_dict(), forced)
    streams = [np.random.default_rng([seed, k]) for k in range(8)]
    result = solve(problem, grid, options, force=force)
    props = report.properties
    props.append(check_stability(problem, grid, streams[0], trials, options, force))
    props.append(check_monotonicity(problem, grid, streams[1], trials, options))
    props.append(check_constant_shift(problem, grid, streams[2], trials, options))
    props.append(check_comparison(problem, grid, streams[3], trials, options))
    props.append(check_derivative_monotonicity(problem, grid, streams[4], trials))
    props.append(check_flux_lipschitz(problem, grid, streams[5], trials, result))
    props.append(check_total_variation(problem, grid, result))
    props.append(check_correspondence(result))
    return report
