"""Backward-in-time upwind scheme for the HJB equation.

One step maps the value slice ``V_j`` to ``V_{j-1}``: at every node the
upwind Hamiltonian is minimised over the input box using the one-sided
differences of ``V_j``, and the minimiser drives the explicit update

    V_{i,j-1} = (1 - sum_d alpha_d |f_d|) V_i
                + sum_d alpha_d (f_d^+ V_{i+e_d} - f_d^- V_{i-e_d}) + dt * g.

In two dimensions the differences, speeds and neighbour shifts are taken
axis by axis.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CflViolation, InvalidArgument, NumericalFailure
from .grid import GridSpec, ScalarField
from .minimize import MinimizerOptions, MinimizerStats, hamiltonian_values, minimize_nodes
from .problems import ControlProblem

log = logging.getLogger(__name__)

# slack on the speed bound and on the convex-combination weights
_SPEED_SLACK = 1e-12
_WEIGHT_SLACK = 1e-14


@dataclass(frozen=True)
class CflStatus:
    alpha_times_sup: float
    satisfies_strict: bool
    satisfies_modified: bool

    def to_dict(self) -> dict:
        return {
            "alpha_times_sup": self.alpha_times_sup,
            "satisfies_strict": self.satisfies_strict,
            "satisfies_modified": self.satisfies_modified,
        }


def check_cfl(problem: ControlProblem, grid: GridSpec) -> CflStatus:
    """Evaluate ``sum_d alpha_d * sup|f_d|`` against the strict (< 1) and modified (<= 1/2) bounds."""
    if problem.state_dim != grid.dim:
        raise InvalidArgument("grid", f"dimension {grid.dim} differs from problem {problem.state_dim}")
    value = float(sum(grid.alpha * s for s in problem.sup_speed))
    return CflStatus(value, value < 1.0, value <= 0.5)


def upwind_hamiltonian(problem: ControlProblem, x, a, d_plus, d_minus) -> float:
    """Upwind Hamiltonian at a single point and control."""
    x = np.atleast_1d(np.asarray(x, dtype=float))[None, :]
    a = np.atleast_1d(np.asarray(a, dtype=float))[None, :]
    if not problem.input_set.contains(a)[0]:
        raise InvalidArgument("a", f"{a[0].tolist()} is not in the input set")
    d_plus = np.atleast_1d(np.asarray(d_plus, dtype=float))[None, :]
    d_minus = np.atleast_1d(np.asarray(d_minus, dtype=float))[None, :]
    return float(hamiltonian_values(problem, x, a, d_plus, d_minus)[0])


def minimize_input(problem: ControlProblem, x, d_plus, d_minus, options: MinimizerOptions | None = None):
    """Minimiser of the upwind Hamiltonian over the input set at one point.

    Returns ``(a_star, h_min)`` with ``a_star`` as a 1-d array.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))[None, :]
    d_plus = np.atleast_1d(np.asarray(d_plus, dtype=float))[None, :]
    d_minus = np.atleast_1d(np.asarray(d_minus, dtype=float))[None, :]
    a, h = minimize_nodes(problem, x, d_plus, d_minus, options)
    return a[0], float(h[0])


def one_sided_differences(values: np.ndarray, grid: GridSpec):
    """Forward and backward periodic differences, stacked on a trailing axis."""
    plus = [(np.roll(values, -1, axis=d) - values) / grid.dx for d in range(grid.dim)]
    minus = [(values - np.roll(values, 1, axis=d)) / grid.dx for d in range(grid.dim)]
    return np.stack(plus, axis=-1), np.stack(minus, axis=-1)


def _chunked_minimize(problem, x, d_plus, d_minus, options, stats, workers):
    if workers <= 1 or x.shape[0] < 2 * workers:
        return minimize_nodes(problem, x, d_plus, d_minus, options, stats)
    bounds = np.linspace(0, x.shape[0], workers + 1).astype(int)
    parts = [slice(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
    part_stats = [MinimizerStats() for _ in parts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(
            pool.map(
                lambda k: minimize_nodes(
                    problem, x[parts[k]], d_plus[parts[k]], d_minus[parts[k]], options, part_stats[k]
                ),
                range(len(parts)),
            )
        )
    for s in part_stats:
        stats.add(s)
    return np.concatenate([r[0] for r in results]), np.concatenate([r[1] for r in results])


def step_backward(
    problem: ControlProblem,
    grid: GridSpec,
    values: np.ndarray,
    options: MinimizerOptions | None = None,
    stats: MinimizerStats | None = None,
    *,
    check_weights: bool = False,
    workers: int = 1,
    x_nodes: np.ndarray | None = None,
):
    """Advance one slice backward in time.

    Args:
        values: ``V_j`` with shape ``grid.shape``.
        check_weights: raise if any explicit-form weight is negative.
        workers: threads used for the per-node minimisation.
        x_nodes: cached ``grid.nodes()``.

    Returns:
        ``(V_{j-1}, A_j)`` with ``A_j`` of shape ``(*grid.shape, m)``.
    """
    stats = stats if stats is not None else MinimizerStats()
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise InvalidArgument("values", f"shape {values.shape} does not match grid {grid.shape}")
    nodes = grid.nodes() if x_nodes is None else x_nodes
    x = nodes.reshape(-1, grid.dim)
    d_plus, d_minus = one_sided_differences(values, grid)
    d_plus = d_plus.reshape(-1, grid.dim)
    d_minus = d_minus.reshape(-1, grid.dim)

    a_star, _ = _chunked_minimize(problem, x, d_plus, d_minus, options, stats, workers)
    f = problem.dynamics(x, a_star)
    bound = np.asarray(problem.sup_speed) * (1 + _SPEED_SLACK) + _SPEED_SLACK
    if np.any(np.abs(f) > bound):
        k = int(np.flatnonzero(np.any(np.abs(f) > bound, axis=1))[0])
        raise InvalidArgument(
            "sup_speed", f"|f|={np.abs(f[k]).tolist()} exceeds the declared bound at x={x[k].tolist()}"
        )
    g = problem.running_cost(x, a_star).reshape(grid.shape)
    f = f.reshape(*grid.shape, grid.dim)
    alpha = grid.alpha
    f_plus = np.maximum(f, 0.0)
    f_minus = np.minimum(f, 0.0)

    centre = 1.0 - alpha * np.sum(np.abs(f), axis=-1)
    if check_weights and np.min(centre) < -_WEIGHT_SLACK:
        raise NumericalFailure("negative explicit-scheme weight", where=float(np.min(centre)))
    new = centre * values + grid.dt * g
    for d in range(grid.dim):
        new = new + alpha * f_plus[..., d] * np.roll(values, -1, axis=d)
        new = new - alpha * f_minus[..., d] * np.roll(values, 1, axis=d)

    if not np.all(np.isfinite(new)):
        idx = np.argwhere(~np.isfinite(new))[0]
        raise NumericalFailure("non-finite value", where=tuple(int(i) - grid.n_space for i in idx))
    return new, a_star.reshape(*grid.shape, problem.control_dim)


@dataclass
class SolveResult:
    """All value and policy slices of one solve.

    ``value[j]`` holds ``V_{.,j}`` for ``j = 0..N_t``.  ``policy[j]`` for
    ``j >= 1`` is the minimiser used in the step from ``j`` to ``j - 1``;
    ``policy[0]`` is the minimiser evaluated on ``V_0`` and is not used by the
    scheme, it only completes the piecewise-constant extension on
    ``[t_0, t_1)``.
    """

    grid: GridSpec
    problem: ControlProblem
    value: np.ndarray
    policy: np.ndarray
    cfl: CflStatus
    stats: MinimizerStats = field(default_factory=MinimizerStats)
    forced: bool = False

    def value_slice(self, j: int) -> ScalarField:
        return ScalarField(self.grid, j, self.value[j])

    def policy_slice(self, j: int) -> ScalarField:
        return ScalarField(self.grid, j, self.policy[j])


def solve(
    problem: ControlProblem,
    grid: GridSpec,
    options: MinimizerOptions | None = None,
    *,
    force: bool = False,
    workers: int = 1,
    terminal: np.ndarray | None = None,
) -> SolveResult:
    """Run the scheme from the terminal cost back to ``t = 0``.

    The solve is refused with :class:`CflViolation` when the strict CFL
    condition fails, unless ``force`` is set.  ``terminal`` overrides the
    sampled terminal cost.
    """
    cfl = check_cfl(problem, grid)
    if not cfl.satisfies_strict and not force:
        raise CflViolation(cfl)
    if not cfl.satisfies_strict:
        log.info("forced solve with alpha*sup|f| = %.6g", cfl.alpha_times_sup)
    nodes = grid.nodes()
    value = np.empty((grid.n_time + 1, *grid.shape))
    policy = np.empty((grid.n_time + 1, *grid.shape, problem.control_dim))
    if terminal is None:
        value[-1] = problem.terminal_cost(nodes)
    else:
        value[-1] = np.asarray(terminal, dtype=float).reshape(grid.shape)
    stats = MinimizerStats()
    for j in range(grid.n_time, 0, -1):
        value[j - 1], policy[j] = step_backward(
            problem,
            grid,
            value[j],
            options,
            stats,
            check_weights=cfl.satisfies_strict,
            workers=workers,
            x_nodes=nodes,
        )
    d_plus, d_minus = one_sided_differences(value[0], grid)
    a0, _ = _chunked_minimize(
        problem,
        nodes.reshape(-1, grid.dim),
        d_plus.reshape(-1, grid.dim),
        d_minus.reshape(-1, grid.dim),
        options,
        stats,
        workers,
    )
    policy[0] = a0.reshape(*grid.shape, problem.control_dim)
    return SolveResult(grid, problem, value, policy, cfl, stats, forced=force and not cfl.satisfies_strict)
