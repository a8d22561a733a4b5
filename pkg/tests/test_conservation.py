import math

import mpmath
import numpy as np
import pytest

from upwind_hjb.conservation import (
    correspondence_error,
    derivative_step,
    differences_of_value,
    evolve_derivative,
    flux_lipschitz_probe,
    numerical_flux_plus,
    source_variation,
    terminal_consistency,
    total_variation,
)
from upwind_hjb.errors import InvalidArgument
from upwind_hjb.grid import grid_from_steps, make_grid
from upwind_hjb.problems import InputSet, lqr_problem, obstacle_problem, separable_problem
from upwind_hjb.upwind import solve


def _flat_cost_problem():
    """Running cost without state dependence, smooth periodic terminal cost."""
    return separable_problem(
        "flat",
        gain=[1.0],
        weight=[0.5],
        state_cost=lambda x: np.zeros(x.shape[:-1]),
        terminal_cost=lambda x: np.cos(np.pi * x[..., 0]),
        input_set=InputSet((-1.0,), (1.0,)),
    )


@pytest.fixture(scope="module")
def lqr_result():
    return solve(lqr_problem(), grid_from_steps(1, 1.0, 0.05, 1.0, 0.025))


@pytest.fixture(scope="module")
def obstacle_result():
    return solve(obstacle_problem(), grid_from_steps(2, 1.0, 0.1, 0.5, 0.01))


def test_numerical_flux_formula():
    p = lqr_problem()
    x = np.array([[0.2], [0.2]])
    a = np.array([[0.5], [-0.5]])
    flux = numerical_flux_plus(p, x, a, [[1.0], [1.0]], [[3.0], [3.0]])
    g = 0.5 * (0.04 + 0.25)
    np.testing.assert_allclose(flux, [0.5 * 3.0 + g, -0.5 * 1.0 + g])


@pytest.mark.parametrize("which", ["lqr_result", "obstacle_result"])
def test_evolved_differences_match_value_differences(which, request):
    result = request.getfixturevalue(which)
    report = correspondence_error(result)
    for side in ("plus", "minus"):
        assert report[side]["relative"] < 1e-12


def test_terminal_slice_is_difference_of_terminal_cost(lqr_result):
    for side in ("plus", "minus"):
        u = evolve_derivative(lqr_result.problem, lqr_result.grid, lqr_result.policy, side)
        np.testing.assert_array_equal(u.values[-1], differences_of_value(lqr_result, side)[-1])


def test_derivative_step_is_monotone_under_modified_cfl():
    p = lqr_problem()
    g = grid_from_steps(1, 1.0, 0.05, 1.0, 0.025)
    rng = np.random.default_rng(5)
    for _ in range(50):
        policy = rng.uniform(-1, 1, (*g.shape, 1))
        low = rng.normal(size=(*g.shape, 1))
        high = low + rng.uniform(0, 1, low.shape)
        for side in ("plus", "minus"):
            gap = derivative_step(p, g, high, policy, side) - derivative_step(p, g, low, policy, side)
            assert gap.min() >= -1e-13


def test_plain_tvd_without_state_cost():
    p = _flat_cost_problem()
    g = grid_from_steps(1, 1.0, 0.05, 1.0, 0.025)
    r = solve(p, g)
    assert source_variation(p, g) == 0.0
    for side in ("plus", "minus"):
        u = evolve_derivative(p, g, r.policy, side).values
        tv = [total_variation(u[j], 1) for j in range(g.n_time + 1)]
        assert all(tv[j - 1] <= tv[j] + 1e-12 for j in range(1, g.n_time + 1))


def test_source_corrected_tv_bound_on_lqr(lqr_result):
    g = lqr_result.grid
    allowance = source_variation(lqr_result.problem, g)
    x = [-1.0 + 0.05 * i for i in range(40)]
    steps = [(x[(i + 1) % 40] ** 2 - x[i] ** 2) / 2 for i in range(40)]
    expected = 0.5 * sum(abs(steps[i] - steps[i - 1]) for i in range(40))
    assert allowance == pytest.approx(expected, rel=1e-12)
    assert allowance == pytest.approx(0.0975, rel=1e-9)
    for side in ("plus", "minus"):
        u = evolve_derivative(lqr_result.problem, g, lqr_result.policy, side).values
        tv = [total_variation(u[j], 1) for j in range(g.n_time + 1)]
        assert all(tv[j - 1] <= tv[j] + allowance + 1e-12 for j in range(1, g.n_time + 1))


def test_total_variation_periodic_and_two_dimensional():
    assert total_variation(np.array([0.0, 1.0, 0.0, 1.0])) == 4.0
    field = np.zeros((4, 4, 2))
    field[1, 1, 0] = 1.0
    # bump seen twice along each of the two spatial axes
    assert total_variation(field, 2) == 4.0


def test_flux_lipschitz_constant(lqr_result):
    rng = np.random.default_rng(2)
    samples = rng.uniform(-3, 3, (64, 3))
    for j in (0, 10, 40):
        assert flux_lipschitz_probe(lqr_result.problem, lqr_result.grid, lqr_result.policy[j], samples) <= 1.0 + 1e-12


def test_terminal_consistency_quadrature():
    p = _flat_cost_problem()
    phi = lambda x: np.sin(np.pi * x)  # noqa: E731
    # integral of sin(pi x) * d/dx cos(pi x) over one period
    exact = float(mpmath.quad(lambda x: mpmath.sin(mpmath.pi * x) * -mpmath.pi * mpmath.sin(mpmath.pi * x), [-1, 1]))
    assert exact == pytest.approx(-math.pi)
    errs = []
    for n in (20, 40, 80):
        g = make_grid(1, 1.0, n, 1.0, 1)
        errs.append(abs(terminal_consistency(p, g, phi) - exact))
    assert errs[-1] < 1e-2
    assert errs[0] > errs[1] > errs[2]


def test_argument_checks(lqr_result):
    g = lqr_result.grid
    with pytest.raises(InvalidArgument):
        evolve_derivative(lqr_result.problem, g, lqr_result.policy, "centre")
    with pytest.raises(InvalidArgument):
        evolve_derivative(lqr_result.problem, g, lqr_result.policy[:-1], "plus")
    with pytest.raises(InvalidArgument):
        source_variation(obstacle_problem(), grid_from_steps(2, 1.0, 0.1, 0.5, 0.01))


def test_warning_when_modified_cfl_fails():
    g = grid_from_steps(1, 1.0, 0.05, 0.8, 0.04)
    r = solve(lqr_problem(), g)
    with pytest.warns(UserWarning, match="modified CFL"):
        evolve_derivative(r.problem, g, r.policy, "plus")
