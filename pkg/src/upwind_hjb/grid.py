"""Uniform periodic space-time grids and piecewise-constant extension.

Spatial nodes per axis are ``x_i = i*dx`` for ``i = -N_x .. N_x - 1``; the node
``i = N_x`` is identified with ``i = -N_x``.  Arrays store node ``i`` at
position ``i + N_x``.  Fields over all time slices have shape
``(n_slices, *space)`` with axes in ``ij`` order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, OutOfRange

# relative slack used when snapping a query onto a cell boundary
_SNAP = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Uniform mesh over ``[-L, L)^dim x [0, T]`` with periodic topology.

    Attributes:
        dim: Spatial dimension, 1 or 2.
        half_width: ``L``; every axis spans ``[-L, L)``.
        n_space: ``N_x``; grid step ``dx = L / N_x`` and ``2*N_x`` nodes per axis.
        horizon: ``T``.
        n_time: ``N_t``; time step ``dt = T / N_t``.
    """

    dim: int
    half_width: float
    n_space: int
    horizon: float
    n_time: int
    dx: float = field(init=False)
    dt: float = field(init=False)
    alpha: float = field(init=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InvalidArgument("dim", f"must be 1 or 2, got {self.dim}")
        for name in ("n_space", "n_time"):
            value = getattr(self, name)
            if int(value) != value or value <= 0:
                raise InvalidArgument(name, f"must be positive, got {value}")
        for name in ("half_width", "horizon"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidArgument(name, f"must be positive, got {value}")
        dx = self.half_width / self.n_space
        dt = self.horizon / self.n_time
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "alpha", dt / dx)

    @property
    def n_nodes(self) -> int:
        """Nodes per axis."""
        return 2 * self.n_space

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_nodes,) * self.dim

    @property
    def size(self) -> int:
        return self.n_nodes**self.dim

    @property
    def axis(self) -> np.ndarray:
        """Node coordinates along one axis."""
        return np.arange(-self.n_space, self.n_space) * self.dx

    @property
    def times(self) -> np.ndarray:
        times = np.arange(self.n_time + 1) * self.dt
        times[-1] = self.horizon
        return times

    def nodes(self) -> np.ndarray:
        """All node coordinates as an array of shape ``(*shape, dim)``."""
        axes = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack(axes, axis=-1)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "half_width": self.half_width,
            "n_space": self.n_space,
            "horizon": self.horizon,
            "n_time": self.n_time,
            "dx": self.dx,
            "dt": self.dt,
            "alpha": self.alpha,
        }


def make_grid(dim: int, half_width: float, n_space: int, horizon: float, n_time: int) -> GridSpec:
    return GridSpec(dim, half_width, n_space, horizon, n_time)


def grid_from_steps(dim: int, half_width: float, dx: float, horizon: float, dt: float) -> GridSpec:
    """Build a grid from step sizes; both must divide their extents evenly."""
    if not dx > 0:
        raise InvalidArgument("dx", f"must be positive, got {dx}")
    if not dt > 0:
        raise InvalidArgument("dt", f"must be positive, got {dt}")
    n_space = _as_count("dx", half_width / dx)
    n_time = _as_count("dt", horizon / dt)
    return GridSpec(dim, half_width, n_space, horizon, n_time)


def _as_count(name: str, ratio: float) -> int:
    count = round(ratio)
    if count <= 0 or abs(ratio - count) > 1e-6 * max(1.0, ratio):
        raise InvalidArgument(name, f"does not divide the extent evenly (ratio {ratio})")
    return int(count)


def wrap_index(i: int, n_nodes: int) -> int:
    """Map an integer node index onto the canonical range ``[-n//2, n - n//2)``."""
    half = n_nodes // 2
    return (i + half) % n_nodes - half


def _cell_index(coord: float, step: float) -> int:
    # index of the half-open cell [c - step/2, c + step/2) containing coord;
    # queries within _SNAP of a boundary belong to the right-hand cell
    s = coord / step + 0.5
    nearest = round(s)
    if abs(s - nearest) <= _SNAP * max(1.0, abs(s)):
        return int(nearest)
    return math.floor(s)


def time_index(grid: GridSpec, t: float) -> int:
    """Slice index ``j`` with ``t in [t_j, t_{j+1})``; ``t = T`` maps to ``N_t``."""
    if t < 0 or t > grid.horizon * (1 + _SNAP):
        raise OutOfRange(f"t={t} outside [0, {grid.horizon}]")
    r = t / grid.dt
    nearest = round(r)
    if abs(r - nearest) <= _SNAP * max(1.0, r):
        j = int(nearest)
    else:
        j = math.floor(r)
    return min(j, grid.n_time)


def node_position(grid: GridSpec, x) -> tuple[int, ...]:
    """Array position of the cell containing spatial point ``x`` (periodic wrap applied)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (grid.dim,):
        raise InvalidArgument("x", f"expected {grid.dim} coordinates, got shape {x.shape}")
    return tuple(
        wrap_index(_cell_index(float(c), grid.dx), grid.n_nodes) + grid.n_space for c in x
    )


def extend_piecewise_constant(fields: np.ndarray, grid: GridSpec, x, t: float, first_slice: int = 0):
    """Evaluate the piecewise-constant extension of discrete data at ``(x, t)``.

    ``fields`` holds one array per time slice starting at ``first_slice``;
    trailing axes beyond the spatial ones (e.g. control components) are
    returned as-is.
    """
    j = time_index(grid, t) - first_slice
    if j < 0 or j >= fields.shape[0]:
        raise OutOfRange(f"t={t} maps to slice {j + first_slice}, which is not stored")
    return fields[(j, *node_position(grid, x))]


@dataclass(frozen=True)
class ScalarField:
    """Values on every spatial node at one time slice."""

    grid: GridSpec
    time_index: int
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape[: self.grid.dim] != self.grid.shape:
            raise InvalidArgument(
                "values", f"shape {self.values.shape} does not match grid {self.grid.shape}"
            )
