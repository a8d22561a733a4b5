"""Spatial differences of the value field evolved as discrete conservation laws.

With ``U = D^+ V`` the scheme for ``V`` is equivalent to

    U_{i,j-1} = U_{i,j} + alpha * (P_{i+1} - P_i),
    P_i = f^+(A_i) U_i + f^-(A_i) U_{i-1} + g(x_i, A_i),

and similarly for ``U_hat = D^- V`` with ``P_hat_i = f^+(A_i) U_hat_{i+1} +
f^-(A_i) U_hat_i + g(x_i, A_i)`` and the difference ``P_hat_i - P_hat_{i-1}``.
In two dimensions the derivative field is the vector of per-axis
differences and the flux sums the contributions of every axis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .grid import GridSpec
from .problems import ControlProblem
from .upwind import SolveResult, check_cfl, one_sided_differences

SIDES = ("plus", "minus")


@dataclass
class DerivativeField:
    """``values[j, ..., d]`` holds the ``d``-th one-sided difference at slice ``j``."""

    side: str
    values: np.ndarray
    policy: np.ndarray


def numerical_flux_plus(problem: ControlProblem, x, a_star, u_left, u_right) -> np.ndarray:
    """``f^+(a*) u_right + f^-(a*) u_left + g(x, a*)``, summed over axes; vectorised over nodes."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    a_star = np.atleast_2d(np.asarray(a_star, dtype=float))
    f = problem.dynamics(x, a_star)
    u_left = np.asarray(u_left, dtype=float).reshape(f.shape)
    u_right = np.asarray(u_right, dtype=float).reshape(f.shape)
    flux = np.maximum(f, 0.0) * u_right + np.minimum(f, 0.0) * u_left
    return np.sum(flux, axis=-1) + problem.running_cost(x, a_star)


def _node_flux(problem, grid, nodes, policy_slice, u, side):
    x = nodes.reshape(-1, grid.dim)
    a = policy_slice.reshape(-1, problem.control_dim)
    if side == "plus":
        left = np.stack([np.roll(u[..., d], 1, axis=d) for d in range(grid.dim)], axis=-1)
        right = u
    else:
        left = u
        right = np.stack([np.roll(u[..., d], -1, axis=d) for d in range(grid.dim)], axis=-1)
    flux = numerical_flux_plus(problem, x, a, left.reshape(-1, grid.dim), right.reshape(-1, grid.dim))
    return flux.reshape(grid.shape)


def derivative_step(problem: ControlProblem, grid: GridSpec, u, policy_slice, side: str, nodes=None):
    """One backward step of the derivative field under a fixed policy slice.

    ``u`` has shape ``(*space, dim)``; returns the field at the previous slice.
    """
    nodes = grid.nodes() if nodes is None else nodes
    u = np.asarray(u, dtype=float)
    flux = _node_flux(problem, grid, nodes, np.asarray(policy_slice, dtype=float), u, side)
    out = np.empty_like(u)
    for d in range(grid.dim):
        if side == "plus":
            diff = np.roll(flux, -1, axis=d) - flux
        else:
            diff = flux - np.roll(flux, 1, axis=d)
        out[..., d] = u[..., d] + grid.alpha * diff
    return out


def evolve_derivative(problem: ControlProblem, grid: GridSpec, policy: np.ndarray, side: str) -> DerivativeField:
    """Evolve ``D^+ V`` (``side="plus"``) or ``D^- V`` backward with a given policy.

    ``policy`` has shape ``(N_t + 1, *space, m)`` as in :class:`SolveResult`;
    slice ``j`` drives the step ``j -> j - 1``.  The modified CFL condition is
    only warned about.
    """
    if side not in SIDES:
        raise InvalidArgument("side", f"must be one of {SIDES}")
    policy = np.asarray(policy, dtype=float)
    expected = (grid.n_time + 1, *grid.shape, problem.control_dim)
    if policy.shape != expected:
        raise InvalidArgument("policy", f"shape {policy.shape} does not cover the grid {expected}")
    if not check_cfl(problem, grid).satisfies_modified:
        warnings.warn("modified CFL condition fails; derivative field may oscillate", stacklevel=2)
    nodes = grid.nodes()
    terminal = problem.terminal_cost(nodes)
    d_plus, d_minus = one_sided_differences(terminal, grid)
    values = np.empty((grid.n_time + 1, *grid.shape, grid.dim))
    values[-1] = d_plus if side == "plus" else d_minus
    for j in range(grid.n_time, 0, -1):
        values[j - 1] = derivative_step(problem, grid, values[j], policy[j], side, nodes)
    return DerivativeField(side, values, policy)


def differences_of_value(result: SolveResult, side: str) -> np.ndarray:
    """``D^+ V`` or ``D^- V`` of every stored value slice, shape ``(N_t + 1, *space, dim)``."""
    grid = result.grid
    out = np.empty((grid.n_time + 1, *grid.shape, grid.dim))
    for j in range(grid.n_time + 1):
        plus, minus = one_sided_differences(result.value[j], grid)
        out[j] = plus if side == "plus" else minus
    return out


def correspondence_error(result: SolveResult) -> dict:
    """Deviation between evolved derivative fields and differences of the value field.

    Returns absolute and relative (to the largest difference magnitude)
    deviations per side.
    """
    report = {}
    for side in SIDES:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            evolved = evolve_derivative(result.problem, result.grid, result.policy, side).values
        direct = differences_of_value(result, side)
        absolute = float(np.max(np.abs(evolved - direct)))
        scale = float(np.max(np.abs(direct)))
        report[side] = {
            "absolute": absolute,
            "relative": absolute / scale if scale > 0 else absolute,
        }
    return report


def total_variation(field_slice, dim: int | None = None) -> float:
    """Periodic total variation; in 2-D the per-axis variations are added.

    Only the first ``dim`` axes are spatial (default: all).  Any trailing
    component axis, as in :class:`DerivativeField`, is summed over.
    """
    w = np.asarray(field_slice, dtype=float)
    dim = w.ndim if dim is None else dim
    return float(sum(np.sum(np.abs(w - np.roll(w, 1, axis=d))) for d in range(dim)))


def flux_lipschitz_probe(problem: ControlProblem, grid: GridSpec, policy_slice, u_samples) -> float:
    """Largest ``|P(u_l, u_r) - p(u_bar)| / max(|u_l - u_bar|, |u_r - u_bar|)`` over nodes and samples.

    ``p(u) = f(a*) u + g(a*)`` uses the scheme's own minimiser at each node.
    Samples with a zero denominator are skipped.  One-dimensional grids only.
    """
    if grid.dim != 1:
        raise InvalidArgument("grid", "the Lipschitz probe is one-dimensional")
    samples = np.atleast_2d(np.asarray(u_samples, dtype=float))
    x = grid.nodes().reshape(-1, 1)
    a = np.asarray(policy_slice, dtype=float).reshape(-1, problem.control_dim)
    f = problem.dynamics(x, a)[:, 0]
    g = problem.running_cost(x, a)
    worst = 0.0
    for u_left, u_right, u_bar in samples:
        denom = max(abs(u_left - u_bar), abs(u_right - u_bar))
        if denom == 0:
            continue
        big = np.maximum(f, 0.0) * u_right + np.minimum(f, 0.0) * u_left + g
        small = f * u_bar + g
        worst = max(worst, float(np.max(np.abs(big - small))) / denom)
    return worst


def source_variation(problem: ControlProblem, grid: GridSpec) -> float:
    """``alpha * TV(second difference)`` of the state-dependent running cost.

    For separable problems without drift the flux is an x-independent
    monotone flux plus ``state_cost(x_i)``, so each step can raise the total
    variation of ``D^+ V`` by at most this amount.
    """
    s = problem.separable
    if s is None or s.drift is not None or grid.dim != 1:
        raise InvalidArgument("problem", "needs a one-dimensional separable problem without drift")
    g0 = s.state_cost(grid.nodes())
    step = np.roll(g0, -1) - g0
    return grid.alpha * total_variation(step, 1)


def terminal_consistency(problem: ControlProblem, grid: GridSpec, phi) -> float:
    """Quadrature ``dx * sum_i phi(x_i) D^+ v_T(x_i)`` over one period (1-D)."""
    x = grid.axis
    terminal = problem.terminal_cost(grid.nodes())
    u = (np.roll(terminal, -1) - terminal) / grid.dx
    return float(grid.dx * np.sum(phi(x) * u))
