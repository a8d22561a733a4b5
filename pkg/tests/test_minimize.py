import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from upwind_hjb.errors import InvalidArgument, NumericalFailure
from upwind_hjb.minimize import (
    MinimizerOptions,
    MinimizerStats,
    hamiltonian_values,
    minimize_closed_form,
    minimize_nodes,
    minimize_scan_golden,
)
from upwind_hjb.problems import (
    ControlProblem,
    InputSet,
    ObstacleParams,
    lqr_problem,
    obstacle_problem,
    separable_problem,
)

slopes = st.floats(-20.0, 20.0, allow_nan=False)


def _brute_force(problem, x, dp, dm, n=20001):
    """Dense 1-D scan of the upwind Hamiltonian, then a second dense scan around the best point (oracle)."""
    lo, hi = problem.input_set.lower[0], problem.input_set.upper[0]
    xs = np.broadcast_to(x, (n, 1))
    dps, dms = np.full((n, 1), dp), np.full((n, 1), dm)
    a = np.linspace(lo, hi, n)[:, None]
    vals = hamiltonian_values(problem, xs, a, dps, dms)
    k = int(np.argmin(vals))
    step = (hi - lo) / (n - 1)
    a = np.linspace(max(lo, a[k, 0] - step), min(hi, a[k, 0] + step), n)[:, None]
    vals = hamiltonian_values(problem, xs, a, dps, dms)
    k = int(np.argmin(vals))
    return a[k, 0], vals[k]


def _wavy_problem():
    """Non-separable 1-D problem with a non-convex Hamiltonian."""

    def dynamics(x, a):
        return 0.5 * np.sin(2 * a) + 0.3 * np.cos(x)

    def running_cost(x, a):
        return np.sum(x * x, axis=-1) + np.sum((a - 0.3) ** 4 + 0.1 * a, axis=-1)

    return ControlProblem(
        "wavy", 1, 1, dynamics, running_cost,
        lambda x: np.zeros(x.shape[:-1]), InputSet((-1.0,), (1.0,)), (0.8,),
    )


@settings(max_examples=200, deadline=None)
@given(st.floats(-1.0, 0.99), slopes, slopes)
def test_closed_form_matches_brute_force_lqr(x, dp, dm):
    p = lqr_problem()
    a, h = minimize_closed_form(p, np.array([[x]]), np.array([[dp]]), np.array([[dm]]))
    _, h_brute = _brute_force(p, np.array([x]), dp, dm)
    assert h[0] <= h_brute + 1e-12
    assert h[0] >= h_brute - 1e-7
    assert -1.0 <= a[0, 0] <= 1.0


@settings(max_examples=150, deadline=None)
@given(st.floats(-1.0, 0.99), slopes, slopes)
def test_generic_matches_closed_form_lqr(x, dp, dm):
    p = lqr_problem()
    args = (p, np.array([[x]]), np.array([[dp]]), np.array([[dm]]))
    _, h_cf = minimize_closed_form(*args)
    _, h_gen = minimize_scan_golden(*args)
    assert h_gen[0] == pytest.approx(h_cf[0], abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(
    st.tuples(st.floats(-1.0, 0.99), st.floats(-1.0, 0.99)),
    st.tuples(slopes, slopes),
    st.tuples(slopes, slopes),
)
def test_generic_matches_closed_form_obstacle(x, dp, dm):
    p = obstacle_problem(ObstacleParams(b=(1.0, 0.5), r=(1.0, 2.0)))
    args = (p, np.array([x]), np.array([dp]), np.array([dm]))
    a_cf, h_cf = minimize_closed_form(*args)
    _, h_gen = minimize_scan_golden(*args)
    assert h_gen[0] == pytest.approx(h_cf[0], abs=1e-8)
    assert np.all(np.abs(a_cf) <= 1.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(-1.0, 0.99), slopes, slopes)
def test_generic_on_non_convex_problem_matches_brute_force(x, dp, dm):
    p = _wavy_problem()
    _, h = minimize_scan_golden(p, np.array([[x]]), np.array([[dp]]), np.array([[dm]]))
    _, h_brute = _brute_force(p, np.array([x]), dp, dm)
    assert h[0] <= h_brute + 1e-10
    # the scan only bounds the minimum from above, to within slope * 1e-8 at a kink
    slope = abs(dp) + abs(dm) + 10.0
    assert h[0] >= h_brute - slope * 1e-8


def test_closed_form_known_values():
    p = lqr_problem()
    x = np.zeros((4, 1))
    dp = np.array([[0.4], [-3.0], [5.0], [1.0]])
    dm = np.array([[0.4], [-3.0], [5.0], [-1.0]])
    a, _ = minimize_closed_form(p, x, dp, dm)
    # a* = clip(-p) when both slopes agree; opposing slopes (p > 0 > q) give 0
    np.testing.assert_allclose(a[:, 0], [-0.4, 1.0, -1.0, 0.0])


def test_closed_form_tie_prefers_smaller_control():
    p = separable_problem(
        "tie", gain=[1.0], weight=[1.0],
        state_cost=lambda x: np.zeros(x.shape[:-1]),
        terminal_cost=lambda x: np.zeros(x.shape[:-1]),
        input_set=InputSet((-1.0,), (1.0,)),
    )
    # h(a) = a^2 - 2|a| on [-1, 1] has equal minima at +-1
    a, h = minimize_closed_form(p, np.zeros((1, 1)), np.array([[-2.0]]), np.array([[2.0]]))
    assert a[0, 0] == -1.0
    assert h[0] == pytest.approx(-1.0)


def test_dispatch_and_stats():
    p = lqr_problem()
    x = np.linspace(-1, 0.9, 8)[:, None]
    dp = np.linspace(-2, 2, 8)[:, None]
    stats = MinimizerStats()
    minimize_nodes(p, x, dp, dp, MinimizerOptions(), stats)
    assert stats.closed_form_nodes == 8 and stats.generic_nodes == 0
    minimize_nodes(p, x, dp, dp, MinimizerOptions(method="scan_golden"), stats)
    assert stats.generic_nodes == 8 and stats.refinement_iterations > 0
    with pytest.raises(InvalidArgument):
        minimize_closed_form(_wavy_problem(), x, dp, dp)


def test_generic_result_independent_of_batching():
    p = obstacle_problem()
    rng = np.random.default_rng(7)
    x = rng.uniform(-1, 1, (40, 2))
    dp = rng.normal(size=(40, 2)) * 3
    dm = rng.normal(size=(40, 2)) * 3
    opts = MinimizerOptions(method="scan_golden")
    a_all, h_all = minimize_scan_golden(p, x, dp, dm, opts)
    for lo, hi in [(0, 7), (7, 23), (23, 40)]:
        a_part, h_part = minimize_scan_golden(p, x[lo:hi], dp[lo:hi], dm[lo:hi], opts)
        np.testing.assert_array_equal(a_part, a_all[lo:hi])
        np.testing.assert_array_equal(h_part, h_all[lo:hi])


@pytest.mark.parametrize(
    "kwargs", [dict(method="bfgs"), dict(scan_points=1), dict(refine_tolerance=0.0)]
)
def test_invalid_options(kwargs):
    with pytest.raises(InvalidArgument):
        MinimizerOptions(**kwargs)


def test_non_finite_objective_reports_probe():
    def running_cost(x, a):
        return np.where(a[:, 0] > 0.5, np.nan, 0.0)

    p = ControlProblem(
        "bad", 1, 1, lambda x, a: a, running_cost,
        lambda x: np.zeros(x.shape[:-1]), InputSet((-1.0,), (1.0,)), (1.0,),
    )
    with pytest.raises(NumericalFailure) as err:
        minimize_scan_golden(p, np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)))
    x, a = err.value.where
    assert a[0] > 0.5
