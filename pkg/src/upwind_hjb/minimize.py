"""Per-node minimisation of the upwind Hamiltonian over the input box.

All routines work on a batch of ``N`` nodes at once: ``x`` is ``(N, n)``,
the one-sided differences are ``(N, n)`` and controls are ``(N, m)``.
Ties between minimisers are broken towards the lexicographically smallest
control.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NumericalFailure
from .problems import ControlProblem

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI2 = (3 - math.sqrt(5)) / 2

METHODS = ("auto", "closed_form", "scan_golden")


@dataclass(frozen=True)
class MinimizerOptions:
    """How the inner minimisation is carried out.

    ``auto`` uses the closed form whenever the problem declares a separable
    structure and falls back to scan + golden section otherwise.
    """

    method: str = "auto"
    scan_points: int = 33
    refine_tolerance: float = 1e-10
    max_sweeps: int = 50

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgument("method", f"must be one of {METHODS}, got {self.method!r}")
        if self.scan_points < 2:
            raise InvalidArgument("scan_points", "need at least 2 scan points per axis")
        if not self.refine_tolerance > 0:
            raise InvalidArgument("refine_tolerance", "must be positive")


@dataclass
class MinimizerStats:
    evaluations: int = 0
    refinement_iterations: int = 0
    closed_form_nodes: int = 0
    generic_nodes: int = 0

    def add(self, other: "MinimizerStats") -> None:
        self.evaluations += other.evaluations
        self.refinement_iterations += other.refinement_iterations
        self.closed_form_nodes += other.closed_form_nodes
        self.generic_nodes += other.generic_nodes

    def to_dict(self) -> dict:
        return {
            "evaluations": self.evaluations,
            "refinement_iterations": self.refinement_iterations,
            "closed_form_nodes": self.closed_form_nodes,
            "generic_nodes": self.generic_nodes,
        }


def hamiltonian_values(problem: ControlProblem, x, a, d_plus, d_minus) -> np.ndarray:
    """Upwind Hamiltonian ``sum_d f_d^+ D^+_d + f_d^- D^-_d + g`` at each node."""
    f = problem.dynamics(x, a)
    flux = np.maximum(f, 0.0) * d_plus + np.minimum(f, 0.0) * d_minus
    return np.sum(flux, axis=-1) + problem.running_cost(x, a)


class _Objective:
    def __init__(self, problem, x, d_plus, d_minus, stats):
        self.problem = problem
        self.x = x
        self.d_plus = d_plus
        self.d_minus = d_minus
        self.stats = stats

    def __call__(self, a):
        values = hamiltonian_values(self.problem, self.x, a, self.d_plus, self.d_minus)
        self.stats.evaluations += len(values)
        bad = ~np.isfinite(values)
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise NumericalFailure(
                "non-finite objective", where=(self.x[k].tolist(), np.asarray(a)[k].tolist())
            )
        return values


def _prefer(value_new, a_new, value_old, a_old):
    """Mask of nodes where the new candidate beats the old one (ties: smaller control)."""
    better = value_new < value_old
    tie = value_new == value_old
    if np.any(tie):
        # lexicographic comparison of control vectors
        diff = a_new - a_old
        first = np.argmax(diff != 0, axis=-1)
        lead = np.take_along_axis(diff, first[:, None], axis=-1)[:, 0]
        better |= tie & (lead < 0)
    return better


def minimize_closed_form(problem: ControlProblem, x, d_plus, d_minus, stats=None):
    """Exact minimiser for problems with a separable structure."""
    s = problem.separable
    if s is None:
        raise InvalidArgument("problem", "closed form needs a separable problem")
    stats = stats if stats is not None else MinimizerStats()
    n_nodes = x.shape[0]
    drift = s.drift_at(x)
    lower = problem.input_set.lower
    upper = problem.input_set.upper
    a_star = np.empty((n_nodes, problem.control_dim))
    for d in range(problem.control_dim):
        b, r = s.gain[d], s.weight[d]
        lo, hi = lower[d], upper[d]
        c, p, q = drift[:, d], d_plus[:, d], d_minus[:, d]
        cands = [np.full(n_nodes, lo), np.full(n_nodes, hi)]
        cands.append(np.clip(-b * p / (2 * r), lo, hi))
        cands.append(np.clip(-b * q / (2 * r), lo, hi))
        if b != 0:
            cands.append(np.clip(-c / b, lo, hi))
        cand = np.stack(cands, axis=1)
        speed = c[:, None] + b * cand
        vals = (
            np.maximum(speed, 0.0) * p[:, None]
            + np.minimum(speed, 0.0) * q[:, None]
            + r * cand * cand
        )
        best = vals.min(axis=1, keepdims=True)
        a_star[:, d] = np.where(vals == best, cand, np.inf).min(axis=1)
    stats.closed_form_nodes += n_nodes
    h = _Objective(problem, x, d_plus, d_minus, stats)(a_star)
    return a_star, h


def _golden(obj, a_base, axis, lo, hi, width, tol, stats):
    """Vectorised golden-section search along one control axis.

    The iteration count follows from the nominal bracket ``width`` alone, so
    results do not depend on how nodes are batched.
    """
    a_c = a_base.copy()
    a_d = a_base.copy()
    if width <= tol:
        a_c[:, axis] = 0.5 * (lo + hi)
        return a_c, obj(a_c)
    n_iter = int(math.ceil(math.log(tol / width) / math.log(INV_PHI)))
    lo = lo.copy()
    hi = hi.copy()
    for _ in range(n_iter):
        h = hi - lo
        a_c[:, axis] = lo + INV_PHI2 * h
        a_d[:, axis] = lo + INV_PHI * h
        left = obj(a_c) <= obj(a_d)
        # minimum bracketed in [lo, d] where left, else in [c, hi]
        hi = np.where(left, a_d[:, axis], hi)
        lo = np.where(left, lo, a_c[:, axis])
    stats.refinement_iterations += n_iter * len(lo)
    a_mid = a_base.copy()
    a_mid[:, axis] = 0.5 * (lo + hi)
    return a_mid, obj(a_mid)


def minimize_scan_golden(problem: ControlProblem, x, d_plus, d_minus, options=None, stats=None):
    """Derivative-free minimiser: uniform scan of the box, then golden-section refinement."""
    options = options or MinimizerOptions()
    stats = stats if stats is not None else MinimizerStats()
    obj = _Objective(problem, x, d_plus, d_minus, stats)
    n_nodes = x.shape[0]
    m = problem.control_dim
    lower = np.asarray(problem.input_set.lower)
    upper = np.asarray(problem.input_set.upper)
    axes = [np.linspace(lower[d], upper[d], options.scan_points) for d in range(m)]
    spacing = (upper - lower) / (options.scan_points - 1)

    best_a = np.empty((n_nodes, m))
    best_v = np.full(n_nodes, np.inf)
    # product() enumerates in lexicographic order; strict '<' keeps the first tie
    for point in itertools.product(*axes):
        a = np.broadcast_to(np.asarray(point), (n_nodes, m))
        v = obj(a)
        take = v < best_v
        best_v = np.where(take, v, best_v)
        best_a[take] = point

    # nodes freeze individually once a sweep moves them less than the tolerance;
    # only active nodes are evaluated, so counts do not depend on batching
    active = np.arange(n_nodes)
    for _ in range(options.max_sweeps if m > 1 else 1):
        sub = _Objective(problem, x[active], d_plus[active], d_minus[active], stats)
        sub_a = best_a[active]
        sub_v = best_v[active]
        start = sub_a.copy()
        for d in range(m):
            lo = np.maximum(sub_a[:, d] - spacing[d], lower[d])
            hi = np.minimum(sub_a[:, d] + spacing[d], upper[d])
            cand_a, cand_v = _golden(
                sub, sub_a, d, lo, hi, 2 * spacing[d], options.refine_tolerance, stats
            )
            take = _prefer(cand_v, cand_a, sub_v, sub_a)
            sub_a[take] = cand_a[take]
            sub_v = np.where(take, cand_v, sub_v)
        best_a[active] = sub_a
        best_v[active] = sub_v
        active = active[np.max(np.abs(sub_a - start), axis=1) > options.refine_tolerance]
        if active.size == 0:
            break
    stats.generic_nodes += n_nodes
    return best_a, best_v


def minimize_nodes(problem: ControlProblem, x, d_plus, d_minus, options=None, stats=None):
    """Dispatch to the closed form or the generic minimiser per ``options.method``."""
    options = options or MinimizerOptions()
    use_closed = options.method == "closed_form" or (
        options.method == "auto" and problem.separable is not None
    )
    if use_closed:
        return minimize_closed_form(problem, x, d_plus, d_minus, stats)
    return minimize_scan_golden(problem, x, d_plus, d_minus, options, stats)
