import mpmath
import numpy as np
import pytest

from upwind_hjb.errors import InvalidArgument, OutOfRange
from upwind_hjb.grid import make_grid
from upwind_hjb.problems import (
    InputSet,
    ObstacleParams,
    exact_lqr_gradient,
    exact_lqr_input,
    exact_lqr_value,
    lqr_problem,
    obstacle_problem,
    rollout,
    separable_problem,
)

mpmath.mp.dps = 30


@pytest.mark.parametrize("x, t", [(0.5, 0.0), (-0.3, 0.25), (0.9, 0.7), (0.0, 0.0), (0.2, 1.0)])
def test_exact_lqr_solution_against_mpmath(x, t):
    T = 1
    tanh = mpmath.tanh(T - mpmath.mpf(t))
    assert exact_lqr_value(x, t) == pytest.approx(float(tanh * mpmath.mpf(x) ** 2 / 2), rel=1e-14, abs=1e-16)
    assert exact_lqr_input(x, t) == pytest.approx(float(-tanh * mpmath.mpf(x)), rel=1e-14, abs=1e-16)
    assert exact_lqr_gradient(x, t) == pytest.approx(float(tanh * mpmath.mpf(x)), rel=1e-14, abs=1e-16)


def test_exact_value_at_reference_point():
    # tanh(1) / 8
    assert exact_lqr_value(0.5, 0.0) == pytest.approx(0.0951992694944706, rel=1e-14)
    assert exact_lqr_input(1.0, 0.0) == pytest.approx(-0.7615941559557649, rel=1e-14)


@pytest.mark.parametrize("x, t", [(0.4, 0.1), (-0.8, 0.5), (0.95, 0.9)])
def test_exact_value_solves_hjb(x, t):
    """-v_t - min_a {a v_x + (x^2 + a^2)/2} = 0 with the minimiser inside [-1, 1]."""

    def v(xx, tt):
        return mpmath.tanh(1 - tt) * xx**2 / 2

    v_t = mpmath.diff(lambda tt: v(mpmath.mpf(x), tt), t)
    v_x = mpmath.diff(lambda xx: v(xx, mpmath.mpf(t)), x)
    a = -v_x
    assert abs(a) <= 1
    residual = -v_t - (a * v_x + (mpmath.mpf(x) ** 2 + a**2) / 2)
    assert abs(residual) < 1e-20


def test_exact_solution_rejects_times_outside_horizon():
    with pytest.raises(OutOfRange):
        exact_lqr_value(0.1, 1.5)
    with pytest.raises(OutOfRange):
        exact_lqr_input(0.1, -0.1)


def test_lqr_problem_structure():
    p = lqr_problem()
    x = np.array([[0.3], [-0.6]])
    a = np.array([[0.5], [-1.0]])
    np.testing.assert_allclose(p.dynamics(x, a), a)
    np.testing.assert_allclose(p.running_cost(x, a), 0.5 * (x[:, 0] ** 2 + a[:, 0] ** 2))
    np.testing.assert_allclose(p.terminal_cost(x), 0.0)
    assert p.sup_speed == (1.0,)
    assert p.separable is not None


def test_obstacle_costs():
    prm = ObstacleParams()
    p = obstacle_problem(prm)
    x = np.array([[0.5, 0.5], [-0.1, -0.1], [0.0, 0.3]])
    d_t = x - np.array(prm.x_target)
    bump = np.exp(-np.sum((x - np.array(prm.x_obstacle)) ** 2, axis=-1) / 0.01)
    expected_g0 = np.sum(d_t**2, axis=-1) + 0.2 * bump
    a = np.array([[0.1, -0.2], [1.0, 1.0], [0.0, 0.0]])
    np.testing.assert_allclose(p.running_cost(x, a), expected_g0 + np.sum(a * a, axis=-1))
    np.testing.assert_allclose(p.terminal_cost(x), 0.8 * np.sum(d_t**2, axis=-1) + 0.2 * bump)
    np.testing.assert_allclose(p.dynamics(x, a), a)
    assert p.sup_speed == (1.0, 1.0)


def test_unused_obstacle_parameters_do_not_enter_costs():
    x = np.random.default_rng(1).uniform(-1, 1, (20, 2))
    a = np.zeros((20, 2))
    base = obstacle_problem(ObstacleParams())
    other = obstacle_problem(ObstacleParams(sigma_i=(5.0, 7.0), c=3.0))
    np.testing.assert_array_equal(base.running_cost(x, a), other.running_cost(x, a))
    np.testing.assert_array_equal(base.terminal_cost(x), other.terminal_cost(x))


@pytest.mark.parametrize("field, value", [("q", (1.0, -1.0)), ("sigma_o", (0.0, 1.0)), ("s", 0.0), ("b", (1.0,))])
def test_obstacle_parameter_validation(field, value):
    with pytest.raises(InvalidArgument):
        ObstacleParams(**{field: value})


def test_input_set_validation_and_membership():
    with pytest.raises(InvalidArgument):
        InputSet((1.0,), (0.0,))
    with pytest.raises(InvalidArgument):
        InputSet((0.0, 0.0), (1.0,))
    box = InputSet((-1.0, 0.0), (1.0, 2.0))
    np.testing.assert_array_equal(box.contains([[0.0, 1.0], [0.0, 2.5]]), [True, False])


def test_separable_problem_validation():
    kwargs = dict(
        gain=[1.0],
        weight=[1.0],
        state_cost=lambda x: np.zeros(x.shape[:-1]),
        terminal_cost=lambda x: np.zeros(x.shape[:-1]),
        input_set=InputSet((-1.0,), (1.0,)),
    )
    with pytest.raises(InvalidArgument):
        separable_problem("p", **{**kwargs, "weight": [0.0]})
    with pytest.raises(InvalidArgument):
        separable_problem("p", drift=lambda x: x, **kwargs)
    p = separable_problem("p", drift=lambda x: 0.5 * np.sin(x), drift_bound=[0.5], **kwargs)
    assert p.sup_speed == (1.5,)


def _still_problem():
    return separable_problem(
        "still",
        gain=[0.0],
        weight=[1.0],
        state_cost=lambda x: np.sum(x * x, axis=-1),
        terminal_cost=lambda x: 2.0 + np.sum(x, axis=-1),
        input_set=InputSet((-1.0,), (1.0,)),
    )


def test_rollout_without_dynamics_is_stationary():
    p = _still_problem()
    g = make_grid(1, 1.0, 10, 1.0, 20)
    policy = np.ones((g.n_time + 1, *g.shape, 1))
    r = rollout(p, policy, [0.3], g)
    np.testing.assert_array_equal(r.states, 0.3)
    # running cost 0.09 + 1 over the horizon, terminal 2.3
    assert r.total_cost == pytest.approx(1.09 + 2.3, rel=1e-12)
    assert not r.wrapped


def test_rollout_wraps_and_flags():
    p = lqr_problem()
    g = make_grid(1, 1.0, 10, 1.0, 20)
    policy = np.ones((g.n_time + 1, *g.shape, 1))
    r = rollout(p, policy, [0.8], g)
    assert r.wrapped
    assert np.all(r.states >= -1.0) and np.all(r.states < 1.0)
    assert r.states[-1, 0] == pytest.approx(-0.2)


def test_rollout_rejects_initial_state_outside_domain():
    g = make_grid(1, 1.0, 10, 1.0, 20)
    policy = np.zeros((g.n_time + 1, *g.shape, 1))
    with pytest.raises(OutOfRange):
        rollout(lqr_problem(), policy, [1.0], g)
    with pytest.raises(InvalidArgument):
        rollout(lqr_problem(), policy, [0.1, 0.2], g)
