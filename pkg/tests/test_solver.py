import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddgame import market, solver
from ddgame.errors import NonConvergence
from ddgame.game import BoxSet, StepWeights


def _linear_feed(A, b):
    return solver.DeterministicFeed(lambda x: A @ x - b)


@pytest.fixture(scope="module")
def ev_setup(ev_params, ev_constants):
    alpha, L = ev_constants
    G = lambda x: market.expected_gradient(x, ev_params.B, ev_params)  # noqa: E731
    x_hat = solver.reference_nash(G, ev_params.box, solver.certified_omega(alpha, L), tol=1e-13)
    return ev_params, alpha, L, x_hat


def test_step_examples():
    box = BoxSet.cube(0, 1, 2)
    x = np.array([0.3, 0.8])
    assert np.array_equal(solver.step(x, np.zeros(2), 5.0, box), x)
    g = np.array([1.0, -2.0])
    assert np.array_equal(solver.step(x, g, np.array([4.0, 4.0]), box), solver.step(x, g, 4.0, box))
    with pytest.raises(ValueError):
        solver.step(x, g, 0.0, box)


def test_omega_schedule():
    assert solver.omega_t(2.0, 3.0, 2) == pytest.approx(2.0 * 3.0 / 2)
    assert solver.omega_t(1.0, 3.0, 0) == 0.5
    assert solver.omega_t(1.0, 3.0, 10**7 + 1) / solver.omega_t(1.0, 3.0, 10**7) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        solver.omega_t(1.0, 2.0, 0)
    with pytest.raises(ValueError):
        solver.Decaying(1.0, r=2.0)


@given(st.floats(0.01, 10), st.floats(2.01, 10), st.integers(0, 10**6))
def test_omega_strictly_increasing(alpha, r, t):
    assert solver.omega_t(alpha, r, t + 1) > solver.omega_t(alpha, r, t)


def test_step_condition_examples():
    assert solver.check_step_condition(StepWeights([4.0, 4.0]), 1.0, 1.0) is True
    assert solver.check_step_condition(StepWeights([8.0, 4.0]), 1.0, 1.0) is False
    om = solver.certified_omega(0.5, 2.0)
    assert solver.check_step_condition(StepWeights.uniform(om, 3), 0.5, 2.0)
    assert not solver.check_step_condition(StepWeights.uniform(om * 0.99, 3), 0.5, 2.0)


def test_bound_calculators():
    W = StepWeights([5.0, 4.0])
    assert solver.neighborhood_bound(W, 2.0, 0.0, 0.0) == 0.0
    assert solver.contraction_factor(StepWeights.uniform(3.0, 2), 0.5) == pytest.approx(3.0 / 3.5)
    expected = 2 * 5 * (5 * 0.1**2 + 2 * 0.3**2) / (2 * 4 * 6)
    assert solver.neighborhood_bound(W, 2.0, 0.1, 0.3) == pytest.approx(expected)
    with pytest.warns(solver.BoundContractWarning):
        val = solver.neighborhood_bound(StepWeights([10.0, 1.0]), 2.0, 0.0, 1.0)
    assert val > 0


def test_reference_nash_linear_game():
    A = np.array([[2.0, 0.5], [-0.5, 1.0]])
    b = np.array([1.0, 0.3])
    box = BoxSet.cube(-5, 5, 2)
    x = solver.reference_nash(lambda v: A @ v - b, box, omega=10.0, tol=1e-13)
    assert np.allclose(x, np.linalg.solve(A, b), atol=1e-11)
    # two feasible starts agree to 10 tol
    y = solver.reference_nash(lambda v: A @ v - b, box, omega=10.0, tol=1e-13, x0=[-5.0, 5.0])
    assert np.max(np.abs(x - y)) <= 1e-12


def test_reference_nash_nonconvergence():
    rot = np.array([[0.0, 1.0], [-1.0, 0.0]])  # monotone but not strongly: plain play cycles outward
    with pytest.raises(NonConvergence):
        solver.reference_nash(lambda v: rot @ v - 1, BoxSet.cube(-10, 10, 2), omega=1.0, max_iter=200, x0=[0.5, 0.0])


def test_nash_is_fixed_point(ev_setup):
    p, alpha, L, x_hat = ev_setup
    G = lambda x: market.expected_gradient(x, p.B, p)  # noqa: E731
    assert np.max(np.abs(solver.step(x_hat, G(x_hat), 1.0, p.box) - x_hat)) <= 1e-10
    assert solver.natural_residual(x_hat, G, p.box) <= 1e-10


def test_solve_from_equilibrium_stays(ev_setup):
    p, alpha, L, x_hat = ev_setup
    feed = solver.MarketFeed(p, p.B, stochastic=False)
    cfg = solver.SolverConfig(solver.ConstantStep(StepWeights.uniform(solver.certified_omega(alpha, L), p.n)), 50, x_hat)
    tr = solver.solve(cfg, feed, p.box, x_ref=x_hat)
    assert np.all(tr.errors <= 1e-18)


def test_deterministic_contraction(ev_setup):
    p, alpha, L, x_hat = ev_setup
    W = StepWeights.uniform(solver.certified_omega(alpha, L), p.n)
    assert solver.check_step_condition(W, alpha, L)
    cfg = solver.SolverConfig(solver.ConstantStep(W), 300, p.box.hi.copy())
    tr = solver.solve(cfg, solver.MarketFeed(p, p.B, stochastic=False), p.box, x_ref=x_hat)
    e = tr.errors
    mask = e[:-1] > 1e-16
    assert np.all(e[1:][mask] / e[:-1][mask] <= solver.contraction_factor(W, alpha) + 1e-9)


def test_feasibility_and_determinism(ev_setup):
    p, alpha, L, x_hat = ev_setup
    feed = solver.MarketFeed(p, p.B)
    for mode in (solver.Decaying(alpha), solver.ConstantStep(StepWeights(np.linspace(5.0, 5.2, p.n)))):
        cfg = solver.SolverConfig(mode, 300, p.box.hi.copy(), seed=17)
        a = solver.solve(cfg, feed, p.box, x_ref=x_hat)
        b = solver.solve(cfg, feed, p.box, x_ref=x_hat)
        assert np.array_equal(a.iterates, b.iterates) and np.array_equal(a.errors, b.errors)
        assert np.all(a.iterates >= p.box.lo) and np.all(a.iterates <= p.box.hi)


def test_infeasible_start_rejected(ev_params):
    cfg = solver.SolverConfig(solver.Decaying(0.3), 5, np.full(ev_params.n, 2.0))
    with pytest.raises(ValueError):
        solver.solve(cfg, solver.MarketFeed(ev_params, ev_params.B), ev_params.box)


def test_log_stride_and_trial_seeds(ev_setup):
    p, alpha, L, x_hat = ev_setup
    cfg = solver.SolverConfig(solver.Decaying(alpha), 100, p.box.hi.copy(), log_stride=10, log_residuals=False)
    trajs = solver.run_trials(cfg, solver.MarketFeed(p, p.B), p.box, 3, master_seed=5, x_ref=x_hat)
    assert trajs[0].t.tolist() == list(range(0, 101, 10))
    assert not np.array_equal(trajs[0].errors, trajs[1].errors)
    again = solver.run_trials(cfg, solver.MarketFeed(p, p.B), p.box, 3, master_seed=5, x_ref=x_hat)
    assert all(np.array_equal(a.errors, b.errors) for a, b in zip(trajs, again))


def test_process_pool_matches_serial(ev_setup):
    p, alpha, L, x_hat = ev_setup
    cfg = solver.SolverConfig(solver.Decaying(alpha), 50, p.box.hi.copy(), log_residuals=False)
    feed = solver.MarketFeed(p, p.B)
    serial = solver.run_trials(cfg, feed, p.box, 3, 9, x_ref=x_hat)
    pooled = solver.run_trials(cfg, feed, p.box, 3, 9, x_ref=x_hat, workers=2)
    assert all(np.array_equal(a.errors, b.errors) for a, b in zip(serial, pooled))


def test_feed_variance_matches_monte_carlo(ev_params):
    p = ev_params
    feed = solver.MarketFeed(p, p.B)
    x = p.box.center
    rng = np.random.default_rng(0)
    g = np.array([feed(x, 0, rng, 1) for _ in range(20_000)])
    mc = np.mean(np.sum((g - feed.expected(x)) ** 2, axis=1))
    assert mc == pytest.approx(feed.variance(x), rel=0.05)
    assert feed.variance(x, batch=4) == pytest.approx(feed.variance(x) / 4)
    assert solver.measured_sigma(feed, [x]) == pytest.approx(np.sqrt(feed.variance(x)))


def test_decaying_deterministic_rate():
    # deterministic feed: error decays at least like 1/t
    A = np.array([[1.0, 0.2], [-0.2, 1.0]])
    b = np.array([0.3, -0.1])
    box = BoxSet.cube(-1, 1, 2)
    x_star = np.linalg.solve(A, b)
    cfg = solver.SolverConfig(solver.Decaying(1.0), 2000, np.array([1.0, 1.0]), log_residuals=False)
    trajs = [solver.solve(cfg, _linear_feed(A, b), box, x_ref=x_star)] * 10
    rep = solver.rate_check(trajs, 1.0, 3.0)
    assert rep.slope <= -0.8


def test_bias_preserves_rate(ev_setup):
    p, alpha, L, x_hat = ev_setup
    feed = solver.BiasedFeed(solver.MarketFeed(p, p.B), rho_bar=0.5, s=1.0, direction=np.ones(p.n))
    cfg = solver.SolverConfig(solver.Decaying(alpha), 1500, p.box.hi.copy(), log_residuals=False)
    trajs = solver.run_trials(cfg, feed, p.box, 20, 3, x_ref=x_hat)
    assert solver.rate_check(trajs, alpha, 3.0).slope <= -0.8


def test_rate_check_requires_trials():
    tr = solver.Trajectory(np.zeros((5, 1)), np.ones(5), np.zeros(5))
    with pytest.raises(ValueError):
        solver.rate_check([tr] * 3, 1.0, 3.0)


def test_trajectory_csv_roundtrip(tmp_path, ev_setup):
    p, alpha, L, x_hat = ev_setup
    cfg = solver.SolverConfig(solver.Decaying(alpha), 20, p.box.hi.copy())
    trajs = solver.run_trials(cfg, solver.MarketFeed(p, p.B), p.box, 2, 1, x_ref=x_hat)
    solver.write_trajectories_csv(tmp_path / "t.csv", trajs)
    back = solver.read_trajectories_csv(tmp_path / "t.csv")
    for k, tr in enumerate(trajs):
        assert np.array_equal(back[k]["error_sq"], tr.errors)
        assert np.array_equal(back[k]["residual"], tr.residuals)


def test_decaying_rate_constant():
    A = solver.decaying_rate_constant(0.5, 3.0, e0=2.0, sigma=1.0)
    assert A == max(0.25 * 3 * 2.0, 8 * 3 * 1.0)
    assert solver.decaying_rate_constant(0.5, 3.0, 2.0, 0.0, rho_bar=1.0, s=6.0) == max(1.5, 4.0)
