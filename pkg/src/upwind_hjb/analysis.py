"""Error norms, convergence-order fits and the convergence studies."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgument, OutOfRange
from .grid import GridSpec, extend_piecewise_constant, grid_from_steps, node_position, time_index
from .minimize import MinimizerOptions
from .problems import (
    ControlProblem,
    ObstacleParams,
    exact_lqr_gradient,
    exact_lqr_input,
    exact_lqr_value,
    lqr_problem,
    obstacle_problem,
)
from .upwind import SolveResult, solve


@dataclass(frozen=True)
class Region:
    """Axis-aligned box ``[x_lo, x_hi]^dim x [t_lo, t_hi]`` (closed).

    ``None`` bounds mean the whole extent of the grid.
    """

    x_lo: Optional[float] = None
    x_hi: Optional[float] = None
    t_lo: Optional[float] = None
    t_hi: Optional[float] = None

    @classmethod
    def interior(cls, half_width: float) -> "Region":
        return cls(-half_width / 2, half_width / 2)

    def mask(self, grid: GridSpec) -> np.ndarray:
        """Boolean mask of shape ``(N_t + 1, *space)``."""
        eps = 1e-12
        x = grid.axis
        xin = np.ones_like(x, dtype=bool)
        if self.x_lo is not None:
            xin &= x >= self.x_lo - eps
        if self.x_hi is not None:
            xin &= x <= self.x_hi + eps
        t = grid.times
        tin = np.ones_like(t, dtype=bool)
        if self.t_lo is not None:
            tin &= t >= self.t_lo - eps
        if self.t_hi is not None:
            tin &= t <= self.t_hi + eps
        space = xin
        for _ in range(grid.dim - 1):
            space = np.logical_and.outer(space, xin)
        return np.logical_and.outer(tin, space)

    def to_dict(self) -> dict:
        return {"x_lo": self.x_lo, "x_hi": self.x_hi, "t_lo": self.t_lo, "t_hi": self.t_hi}


def grid_norm(z: np.ndarray, grid: GridSpec, mask: np.ndarray | None = None) -> float:
    """Discrete space-time L2 norm ``(sum z^2 dx^dim dt)^(1/2)``.

    ``z`` has shape ``(n_slices, *space)`` or carries one more trailing axis
    of vector components, which are combined in the Euclidean norm.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim == grid.dim + 2:
        sq = np.sum(z * z, axis=-1)
    else:
        sq = z * z
    if mask is not None:
        if mask.shape != sq.shape:
            raise InvalidArgument("mask", f"shape {mask.shape} does not match {sq.shape}")
        sq = sq[mask]
    if sq.size == 0:
        raise InvalidArgument("region", "measurement region contains no nodes")
    return math.sqrt(float(np.sum(sq)) * grid.dx**grid.dim * grid.dt)


def fit_order(points: Sequence[tuple[float, float]]) -> float:
    """Least-squares slope of ``log(error)`` against ``log(dx)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise InvalidArgument("points", "need at least two (dx, error) pairs")
    if np.any(pts <= 0):
        raise InvalidArgument("points", "step sizes and errors must be positive")
    return float(np.polyfit(np.log(pts[:, 0]), np.log(pts[:, 1]), 1)[0])


@dataclass
class ConvergenceReport:
    resolutions: list[tuple[float, float]]
    errors_value: list[float]
    errors_input: list[float]
    fitted_order_value: Optional[float]
    fitted_order_input: Optional[float]
    measurement_region: Region
    sup_errors_value: list[float] = field(default_factory=list)

    def rate_constants(self) -> list[float]:
        """``sup|V - v| / (dt + dx)`` per resolution (needs sup errors)."""
        return [e / (dx + dt) for (dx, dt), e in zip(self.resolutions, self.sup_errors_value)]

    def to_dict(self) -> dict:
        return {
            "resolutions": [list(r) for r in self.resolutions],
            "errors_value": self.errors_value,
            "errors_input": self.errors_input,
            "fitted_order_value": self.fitted_order_value,
            "fitted_order_input": self.fitted_order_input,
            "measurement_region": self.measurement_region.to_dict(),
            "sup_errors_value": self.sup_errors_value,
        }


def _orders(resolutions, errors_value, errors_input):
    if len(resolutions) < 2:
        return None, None
    dxs = [r[0] for r in resolutions]
    return fit_order(list(zip(dxs, errors_value))), fit_order(list(zip(dxs, errors_input)))


def _check_ladder(dxs):
    if any(b >= a for a, b in zip(dxs, dxs[1:])):
        raise InvalidArgument("resolutions", "step sizes must be strictly decreasing")


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def lqr_errors(result: SolveResult, horizon: float, region: Region):
    """L2 value error, L2 input error and sup value error against the exact solution."""
    grid = result.grid
    x = grid.axis[None, :]
    t = grid.times[:, None]
    mask = region.mask(grid)
    err_v = result.value - exact_lqr_value(x, t, horizon)
    err_a = result.policy[..., 0] - exact_lqr_input(x, t, horizon)
    return grid_norm(err_v, grid, mask), grid_norm(err_a, grid, mask), float(np.max(np.abs(err_v[mask])))


def convergence_study_lqr(
    resolutions: Sequence[float] = (0.1, 0.05, 0.025, 0.0125),
    horizon: float = 1.0,
    region: Region | None = None,
    *,
    alpha: float = 0.5,
    half_width: float = 1.0,
    options: MinimizerOptions | None = None,
    workers: int = 1,
) -> ConvergenceReport:
    """Errors of the LQR solve against the closed-form solution on a ladder of ``dx``.

    ``dt = alpha * dx``; errors are measured on ``region`` (default: the
    interior half box ``|x| <= L/2``) at every node and time level.
    """
    dxs = [float(d) for d in resolutions]
    _check_ladder(dxs)
    region = region or Region.interior(half_width)
    problem = lqr_problem(horizon)

    def run(dx):
        grid = grid_from_steps(1, half_width, dx, horizon, alpha * dx)
        return grid, lqr_errors(solve(problem, grid, options), horizon, region)

    outcomes = _map(run, dxs, workers)
    res = [(g.dx, g.dt) for g, _ in outcomes]
    ev = [o[0] for _, o in outcomes]
    ea = [o[1] for _, o in outcomes]
    sup = [o[2] for _, o in outcomes]
    ov, oa = _orders(res, ev, ea)
    return ConvergenceReport(res, ev, ea, ov, oa, region, sup)


def sample_on_grid(result: SolveResult, fields: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Evaluate the piecewise-constant extension of ``fields`` at every node of ``grid``."""
    src = result.grid
    # node positions do not depend on time, so map each axis once
    pos = np.array([node_position(src, [x] * src.dim)[0] for x in grid.axis])
    jt = np.array([time_index(src, t) for t in grid.times])
    if grid.dim == 1:
        return fields[jt[:, None], pos[None, :]]
    return fields[jt[:, None, None], pos[None, :, None], pos[None, None, :]]


def self_convergence_study_2d(
    resolutions: Sequence[float] = (0.1, 0.05),
    reference: tuple[float, float] = (0.02, 0.002),
    *,
    dt_ratio: float = 0.1,
    horizon: float = 1.0,
    params: ObstacleParams | None = None,
    region: Region | None = None,
    options: MinimizerOptions | None = None,
    workers: int = 1,
    reference_result: SolveResult | None = None,
) -> ConvergenceReport:
    """Self-convergence of the 2-D obstacle problem against a fine reference solve.

    Both solutions are compared at the coarse nodes, the reference through its
    piecewise-constant extension.
    """
    dxs = [float(d) for d in resolutions]
    _check_ladder(dxs)
    ref_dx, ref_dt = reference
    if ref_dx >= min(dxs):
        raise InvalidArgument("reference", "reference must be finer than every study resolution")
    problem = obstacle_problem(params)
    region = region or Region()
    if reference_result is None:
        ref_grid = grid_from_steps(2, 1.0, ref_dx, horizon, ref_dt)
        reference_result = solve(problem, ref_grid, options, workers=workers)

    def run(dx):
        grid = grid_from_steps(2, 1.0, dx, horizon, dt_ratio * dx)
        result = solve(problem, grid, options)
        ref_v = sample_on_grid(reference_result, reference_result.value, grid)
        ref_a = sample_on_grid(reference_result, reference_result.policy, grid)
        mask = region.mask(grid)
        ev = grid_norm(ref_v - result.value, grid, mask)
        ea = grid_norm(ref_a - result.policy, grid, mask)
        return grid, ev, ea, float(np.max(np.abs((ref_v - result.value)[mask])))

    outcomes = _map(run, dxs, workers)
    res = [(g.dx, g.dt) for g, *_ in outcomes]
    ev = [o[1] for o in outcomes]
    ea = [o[2] for o in outcomes]
    ov, oa = _orders(res, ev, ea)
    return ConvergenceReport(res, ev, ea, ov, oa, region, [o[3] for o in outcomes])


# -- minimiser diagnostics -------------------------------------------------------


@dataclass
class EpiDiagnostic:
    sample_points: list[tuple[float, float]]
    resolutions: list[float]
    distances: np.ndarray  # (n_points, n_resolutions)
    skipped: list[tuple[float, float]]

    @property
    def summary(self) -> float:
        """Fraction of points whose finest-resolution distance does not exceed the coarsest."""
        if len(self.distances) == 0:
            return float("nan")
        return float(np.mean(self.distances[:, -1] <= self.distances[:, 0]))

    def median_distances(self) -> list[float]:
        return [float(v) for v in np.median(self.distances, axis=0)]


def argmin_set(objective, lower: float, upper: float, spacing: float = 1e-4, tol: float = 1e-6) -> np.ndarray:
    """Dense-scan approximation of ``argmin`` over ``[lower, upper]``.

    Returns every scan point whose objective is within ``tol`` of the minimum.
    """
    n = int(round((upper - lower) / spacing)) + 1
    grid = np.linspace(lower, upper, n)
    values = objective(grid)
    return grid[values <= values.min() + tol]


def epi_diagnostic(
    resolutions: Sequence[float],
    sample_points: Sequence[tuple[float, float]],
    horizon: float = 1.0,
    *,
    alpha: float = 0.5,
    options: MinimizerOptions | None = None,
) -> EpiDiagnostic:
    """Distance from the scheme's input to the argmin set of the exact Hamiltonian (LQR).

    For each sample ``(x, t)`` the exact Hamiltonian
    ``h(a) = a * v_x(x, t) + (x^2 + a^2)/2`` is scanned over ``E`` and the
    scheme's piecewise-constant input is compared with its minimisers.
    """
    problem = lqr_problem(horizon)
    lo, hi = problem.input_set.lower[0], problem.input_set.upper[0]
    results = [solve(problem, grid_from_steps(1, 1.0, dx, horizon, alpha * dx), options) for dx in resolutions]
    kept, skipped, rows = [], [], []
    for x, t in sample_points:
        if not (-1.0 <= x < 1.0 and 0.0 <= t <= horizon):
            skipped.append((x, t))
            continue
        slope = float(exact_lqr_gradient(x, t, horizon))
        targets = argmin_set(lambda a: a * slope + 0.5 * (x * x + a * a), lo, hi)
        row = []
        for r in results:
            try:
                a_k = float(extend_piecewise_constant(r.policy[..., 0], r.grid, x, t))
            except OutOfRange:
                row = None
                break
            row.append(float(np.min(np.abs(targets - a_k))))
        if row is None:
            skipped.append((x, t))
            continue
        kept.append((x, t))
        rows.append(row)
    return EpiDiagnostic(kept, list(resolutions), np.asarray(rows).reshape(len(rows), len(results)), skipped)


def consistency_residual(grid: GridSpec, horizon: float = 1.0, region: Region | None = None) -> float:
    """Worst interior defect of the LQR scheme applied to ``phi = sin(pi x) exp(-t)``.

    The residual ``(phi(t_{j-1}) - F[phi(t_j)]) / dt`` is compared with
    ``-d_t phi - min_a {a phi_x + (x^2 + a^2)/2}`` at every node in ``region``
    and all time levels ``j >= 1``.
    """
    from .upwind import step_backward

    problem = lqr_problem(horizon)
    region = region or Region.interior(grid.half_width)
    x = grid.axis
    mask = region.mask(grid)
    worst = 0.0
    for j in range(1, grid.n_time + 1):
        t = grid.times[j]
        phi_j = np.sin(np.pi * x) * np.exp(-t)
        stepped, _ = step_backward(problem, grid, phi_j)
        t_prev = grid.times[j - 1]
        residual = (np.sin(np.pi * x) * np.exp(-t_prev) - stepped) / grid.dt
        # target evaluated at t_j; the time offset is O(dt)
        phi_t = -np.sin(np.pi * x) * np.exp(-t)
        phi_x = np.pi * np.cos(np.pi * x) * np.exp(-t)
        a = np.clip(-phi_x, -1.0, 1.0)
        target = -phi_t - (a * phi_x + 0.5 * (x * x + a * a))
        worst = max(worst, float(np.max(np.abs(residual - target)[mask[j]])))
    return worst


__all__ = [
    "Region",
    "grid_norm",
    "fit_order",
    "ConvergenceReport",
    "convergence_study_lqr",
    "self_convergence_study_2d",
    "EpiDiagnostic",
    "argmin_set",
    "epi_diagnostic",
    "consistency_residual",
    "lqr_errors",
    "sample_on_grid",
]
