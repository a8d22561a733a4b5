"""Optimal control problem definitions and the two benchmark problems.

Callbacks are vectorised: ``x`` has shape ``(..., n)`` and ``a`` has shape
``(..., m)``; dynamics return ``(..., n)`` and costs return ``(...)``.
Callbacks must be pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgument, OutOfRange
from .grid import GridSpec, extend_piecewise_constant

Array = np.ndarray


@dataclass(frozen=True)
class InputSet:
    """Box of admissible controls, one ``[lower, upper]`` interval per control axis."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size == 0:
            raise InvalidArgument("input_set", "lower and upper must be matching 1-d bounds")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidArgument("input_set", "bounds must be finite")
        if np.any(lo > hi):
            raise InvalidArgument("input_set", "lower bound exceeds upper bound")
        object.__setattr__(self, "lower", tuple(float(v) for v in lo))
        object.__setattr__(self, "upper", tuple(float(v) for v in hi))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, a, atol: float = 0.0) -> Array:
        a = np.asarray(a, dtype=float)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.all((a >= lo - atol) & (a <= hi + atol), axis=-1)


@dataclass(frozen=True)
class SeparableStructure:
    """Marks a problem whose control enters axis by axis and quadratically.

    Requires ``control_dim == state_dim`` and

        f_d(x, a) = drift_d(x) + gain_d * a_d
        g(x, a)   = state_cost(x) + sum_d weight_d * a_d**2

    with ``weight_d > 0``.  The per-node minimisation then has a closed form.
    """

    gain: tuple[float, ...]
    weight: tuple[float, ...]
    state_cost: Callable[[Array], Array]
    drift: Optional[Callable[[Array], Array]] = None

    def drift_at(self, x: Array) -> Array:
        if self.drift is None:
            return np.zeros_like(x)
        return self.drift(x)


@dataclass(frozen=True)
class ControlProblem:
    """Dynamics, costs and input set of a finite-horizon control problem.

    ``sup_speed[d]`` must bound ``|f_d(x, a)|`` over the domain and the input
    set; the CFL gate uses it verbatim.
    """

    name: str
    state_dim: int
    control_dim: int
    dynamics: Callable[[Array, Array], Array]
    running_cost: Callable[[Array, Array], Array]
    terminal_cost: Callable[[Array], Array]
    input_set: InputSet
    sup_speed: tuple[float, ...]
    separable: Optional[SeparableStructure] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.input_set.dim != self.control_dim:
            raise InvalidArgument("input_set", "dimension differs from control_dim")
        speed = tuple(float(s) for s in np.atleast_1d(self.sup_speed))
        if len(speed) != self.state_dim or any(not (s >= 0) for s in speed):
            raise InvalidArgument("sup_speed", "need one nonnegative bound per state axis")
        object.__setattr__(self, "sup_speed", speed)
        if self.separable is not None and self.control_dim != self.state_dim:
            raise InvalidArgument("separable", "requires control_dim == state_dim")


def separable_problem(
    name: str,
    *,
    gain,
    weight,
    state_cost: Callable[[Array], Array],
    terminal_cost: Callable[[Array], Array],
    input_set: InputSet,
    drift: Optional[Callable[[Array], Array]] = None,
    drift_bound=None,
    params: Optional[dict] = None,
) -> ControlProblem:
    """Build a :class:`ControlProblem` from its separable structure.

    ``drift_bound`` bounds ``|drift_d|`` per axis and is required when a drift
    is given; the speed bound is then ``drift_bound + |gain| * max|a|``.
    """
    gain = np.atleast_1d(np.asarray(gain, dtype=float))
    weight = np.atleast_1d(np.asarray(weight, dtype=float))
    n = gain.size
    if weight.shape != gain.shape or input_set.dim != n:
        raise InvalidArgument("gain", "gain, weight and input set must have equal length")
    if np.any(weight <= 0):
        raise InvalidArgument("weight", "control cost weights must be positive")
    if drift is not None and drift_bound is None:
        raise InvalidArgument("drift_bound", "required when a drift is given")
    bound = np.zeros(n) if drift_bound is None else np.atleast_1d(np.asarray(drift_bound, float))
    amax = np.maximum(np.abs(input_set.lower), np.abs(input_set.upper))
    structure = SeparableStructure(tuple(gain), tuple(weight), state_cost, drift)

    def dynamics(x, a):
        return structure.drift_at(np.asarray(x, float)) + gain * np.asarray(a, float)

    def running_cost(x, a):
        a = np.asarray(a, float)
        return state_cost(np.asarray(x, float)) + np.sum(weight * a * a, axis=-1)

    return ControlProblem(
        name=name,
        state_dim=n,
        control_dim=n,
        dynamics=dynamics,
        running_cost=running_cost,
        terminal_cost=terminal_cost,
        input_set=input_set,
        sup_speed=tuple(bound + np.abs(gain) * amax),
        separable=structure,
        params=dict(params or {}),
    )


# -- LQR benchmark -----------------------------------------------------------


def lqr_problem(horizon: float = 1.0) -> ControlProblem:
    """``f = a``, ``g = (x^2 + a^2)/2``, zero terminal cost, ``E = [-1, 1]``."""

    def state_cost(x):
        return 0.5 * np.sum(x * x, axis=-1)

    def terminal_cost(x):
        return np.zeros(np.shape(x)[:-1])

    return separable_problem(
        "lqr1d",
        gain=[1.0],
        weight=[0.5],
        state_cost=state_cost,
        terminal_cost=terminal_cost,
        input_set=InputSet((-1.0,), (1.0,)),
        params={"horizon": horizon},
    )


def _check_time(t, horizon):
    t = np.asarray(t, dtype=float)
    if np.any(t > horizon) or np.any(t < 0):
        raise OutOfRange(f"t must lie in [0, {horizon}]")
    return t


def exact_lqr_value(x, t, horizon: float = 1.0):
    """Closed-form value function of the LQR benchmark on the whole line."""
    t = _check_time(t, horizon)
    return np.tanh(horizon - t) * np.square(x) / 2.0


def exact_lqr_input(x, t, horizon: float = 1.0):
    """Closed-form optimal feedback of the LQR benchmark."""
    t = _check_time(t, horizon)
    return -np.tanh(horizon - t) * np.asarray(x, dtype=float)


def exact_lqr_gradient(x, t, horizon: float = 1.0):
    t = _check_time(t, horizon)
    return np.tanh(horizon - t) * np.asarray(x, dtype=float)


# -- 2-D obstacle benchmark ------------------------------------------------------


@dataclass(frozen=True)
class ObstacleParams:
    """Parameters of the 2-D obstacle-avoidance problem (diagonals of the matrices).

    ``sigma_i`` and ``c`` are carried for completeness but enter neither cost.
    """

    b: tuple[float, float] = (1.0, 1.0)
    r: tuple[float, float] = (1.0, 1.0)
    q: tuple[float, float] = (1.0, 1.0)
    q_t: tuple[float, float] = (0.8, 0.8)
    sigma_o: tuple[float, float] = (0.01, 0.01)
    sigma_i: tuple[float, float] = (0.02, 0.02)
    s: float = 0.2
    s_t: float = 0.2
    c: Optional[float] = None
    x_target: tuple[float, float] = (0.5, 0.5)
    x_obstacle: tuple[float, float] = (-0.1, -0.1)
    input_lower: tuple[float, float] = (-1.0, -1.0)
    input_upper: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        for name in ("b", "r", "q", "q_t", "sigma_o", "sigma_i"):
            diag = getattr(self, name)
            if len(diag) != 2 or any(not (v > 0) for v in diag):
                raise InvalidArgument(name, "diagonal entries must be positive")
        for name in ("s", "s_t"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(name, "must be positive")


def obstacle_problem(params: ObstacleParams | None = None) -> ControlProblem:
    """``f = B a`` with quadratic tracking cost and a Gaussian obstacle penalty."""
    p = params or ObstacleParams()
    q = np.asarray(p.q)
    q_t = np.asarray(p.q_t)
    inv_sigma = 1.0 / np.asarray(p.sigma_o)
    x_t = np.asarray(p.x_target)
    x_o = np.asarray(p.x_obstacle)

    def bump(x):
        d = x - x_o
        return np.exp(-np.sum(d * d * inv_sigma, axis=-1))

    def state_cost(x):
        d = x - x_t
        return np.sum(d * d * q, axis=-1) + p.s * bump(x)

    def terminal_cost(x):
        d = x - x_t
        return np.sum(d * d * q_t, axis=-1) + p.s_t * bump(x)

    return separable_problem(
        "obstacle2d",
        gain=p.b,
        weight=p.r,
        state_cost=state_cost,
        terminal_cost=terminal_cost,
        input_set=InputSet(p.input_lower, p.input_upper),
        params={k: getattr(p, k) for k in p.__dataclass_fields__},
    )


# -- rollout -------------------------------------------------------------------


@dataclass
class Rollout:
    times: Array
    states: Array  # (N_t + 1, n)
    controls: Array  # (N_t, m)
    running_costs: Array  # (N_t,)
    total_cost: float
    wrapped: bool


def rollout(problem: ControlProblem, policy: Array, x0, grid: GridSpec) -> Rollout:
    """Forward-Euler simulation under a zero-order-hold, piecewise-constant policy.

    ``policy`` has shape ``(N_t + 1, *space, m)``.  States leaving
    ``[-L, L)`` are wrapped back periodically and ``wrapped`` is set.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if x.shape != (grid.dim,):
        raise InvalidArgument("x0", f"expected {grid.dim} coordinates")
    L = grid.half_width
    if np.any(x < -L) or np.any(x >= L):
        raise OutOfRange(f"x0={x0} outside [-{L}, {L})")
    if policy.shape[0] != grid.n_time + 1:
        raise InvalidArgument("policy", "need one slice per time level")
    times = grid.times
    states = [x.copy()]
    controls, costs = [], []
    wrapped = False
    for j in range(grid.n_time):
        a = np.atleast_1d(extend_piecewise_constant(policy, grid, x, times[j]))
        g = float(problem.running_cost(x[None, :], a[None, :])[0])
        x = x + grid.dt * problem.dynamics(x[None, :], a[None, :])[0]
        if np.any(x < -L) or np.any(x >= L):
            wrapped = True
            x = (x + L) % (2 * L) - L
        controls.append(a)
        costs.append(g)
        states.append(x.copy())
    running = np.asarray(costs)
    total = float(np.sum(grid.dt * running) + problem.terminal_cost(x[None, :])[0])
    return Rollout(times, np.asarray(states), np.asarray(controls), running, total, wrapped)


__all__ = [
    "InputSet",
    "SeparableStructure",
    "ControlProblem",
    "separable_problem",
    "lqr_problem",
    "exact_lqr_value",
    "exact_lqr_input",
    "exact_lqr_gradient",
    "ObstacleParams",
    "obstacle_problem",
    "Rollout",
    "rollout",
]
