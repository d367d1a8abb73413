import ast
import inspect
import math

import numpy as np
import pytest

from ddgame import market, oracle, solver
from ddgame.errors import BestResponseCycle


def test_finite_diff_quadratic_exact():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    b = np.array([1.0, -1.0])
    f = lambda x: 0.5 * x @ A @ x - b @ x  # noqa: E731
    x = np.array([0.3, -0.7])
    assert np.max(np.abs(oracle.finite_diff(f, x, h=1e-4) - (A @ x - b))) <= 1e-8
    with pytest.raises(ValueError):
        oracle.finite_diff(f, x, h=0.0)


def test_finite_diff_softplus_is_sigmoid():
    for y in np.linspace(-10, 10, 41):
        fd = oracle.finite_diff(lambda v: oracle._softplus(v[0]), np.array([y]))[0]
        assert abs(fd - 1 / (1 + math.exp(-y))) <= 1e-6


def test_finite_diff_cost_matches_grad_x():
    p = market.default_market(n=2, rng=np.random.default_rng(0))
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = rng.uniform(p.box.lo, p.box.hi)
        z = rng.normal()

        def f(v):
            y = x.copy()
            y[0] = v[0]
            return float(market.cost(0, y, z, p))

        fd = oracle.finite_diff(f, np.array([x[0]]))[0]
        assert abs(fd - market.grad_x(0, x, z, p)) <= 1e-6 * max(1.0, abs(fd))


def test_closed_form_decoupled():
    spec = oracle.QuadraticGameSpec(3, np.array([1.0, 2.0, 4.0]), np.zeros((3, 3)), np.array([0.5, 1.0, -2.0]), np.full(3, -10.0), np.full(3, 10.0))
    assert np.allclose(oracle.closed_form_nash(spec), [0.5, 0.5, -0.5], atol=1e-15)


def test_closed_form_two_player_hand_solution():
    a = c = 0.1
    B = np.array([[-a, c], [c, -a]])
    spec = oracle.QuadraticGameSpec(2, np.ones(2), B, np.ones(2), np.full(2, -10.0), np.full(2, 10.0))
    x = oracle.closed_form_nash(spec)
    # (1 + 2a) x_i - c x_j = 1 with symmetry: x = 1 / (1 + 2a - c)
    assert np.allclose(x, 1 / (1 + 2 * a - c), atol=1e-14)
    assert np.max(np.abs(spec.gradient(x))) <= 1e-10


def test_closed_form_zeroes_market_gradient():
    rng = np.random.default_rng(2)
    n = 5
    B = market.build_B(n, 0.003, rng)
    xi = rng.standard_normal((40, n))
    p = market.MarketParams(n=n, lam=rng.uniform(0.5, 2, n), p_w=0.0, p_r=0.0, w=0.0, B=B, base_demand=xi, price_bounds=(-10.0, 10.0))
    spec = oracle.QuadraticGameSpec(n, p.lam, B, xi.mean(axis=0), p.box.lo, p.box.hi)
    x = oracle.closed_form_nash(spec)
    assert np.max(np.abs(market.expected_gradient(x, B, p))) <= 1e-10
    assert np.max(np.abs(spec.gradient(x))) <= 1e-10


def test_closed_form_boundary_fallback_uses_grid():
    spec = oracle.QuadraticGameSpec(2, np.ones(2), np.zeros((2, 2)), np.array([5.0, 0.25]), np.zeros(2), np.ones(2))
    x = oracle.closed_form_nash(spec, resolution=1000)
    assert x == pytest.approx([1.0, 0.25], abs=1e-3)
    spec3 = oracle.QuadraticGameSpec(3, np.ones(3), np.zeros((3, 3)), np.full(3, 5.0), np.zeros(3), np.ones(3))
    with pytest.raises(Exception):
        oracle.closed_form_nash(spec3)


def test_grid_nash_decoupled_matches_1d_argmin():
    targets = np.array([0.37, -0.52])
    lo, hi = np.full(2, -1.0), np.full(2, 1.0)

    def ev(i, c, profile):
        return (c - targets[i]) ** 2 + 0.3 * np.sin(5 * c)

    x = oracle.grid_nash(ev, lo, hi, resolution=2000)
    grid = np.linspace(-1, 1, 2001)
    for i in range(2):
        assert x[i] == grid[np.argmin(ev(i, grid, x))]


def test_grid_nash_swap_symmetry():
    p = market.default_market(n=2, rng=np.random.default_rng(3))
    B = p.B
    P = np.array([[0, 1], [1, 0]])
    ev = oracle.ev_grid_evaluator(B, p.base_demand, 1.0, p.p_w, p.p_r, 0.0)
    ev_swapped = oracle.ev_grid_evaluator(P @ B @ P, p.base_demand[:, ::-1], 1.0, p.p_w, p.p_r, 0.0)
    x = oracle.grid_nash(ev, p.box.lo, p.box.hi, resolution=2000)
    y = oracle.grid_nash(ev_swapped, p.box.lo, p.box.hi, resolution=2000)
    assert np.array_equal(x, y[::-1])


def test_grid_nash_detects_cycles():
    # matching pennies style best responses on a 1-D grid never settle
    def ev(i, c, profile):
        other = profile[1 - i]
        sign = 1.0 if i == 0 else -1.0
        return sign * (c - 0.5) * (other - 0.5)

    with pytest.raises(BestResponseCycle):
        oracle.grid_nash(ev, np.zeros(2), np.ones(2), resolution=100)


def test_grid_nash_validation():
    with pytest.raises(ValueError):
        oracle.grid_nash(lambda *a: None, np.zeros(3), np.ones(3))
    with pytest.raises(ValueError):
        oracle.grid_nash(lambda *a: None, np.zeros(2), np.ones(2), resolution=10)


def test_grid_nash_agrees_with_reference_nash():
    p = market.default_market(n=2, rng=np.random.default_rng(4))
    mc = market.monotonicity_constants(p, p.B)
    G = lambda x: market.expected_gradient(x, p.B, p)  # noqa: E731
    x_ref = solver.reference_nash(G, p.box, solver.certified_omega(mc.alpha_conservative, mc.grad_lipschitz), tol=1e-12)
    res = 2000
    x_grid = oracle.grid_nash(oracle.ev_grid_evaluator(p.B, p.base_demand, 1.0, p.p_w, p.p_r, 0.0), p.box.lo, p.box.hi, res)
    cell = (p.p_r - p.p_w) / res
    assert np.max(np.abs(x_grid - x_ref)) <= 2 * cell


def test_expected_costs_agree_with_market():
    p = market.default_market(n=3, rng=np.random.default_rng(5))
    x = np.array([0.1, 0.2, 0.3])
    ours = oracle.ev_expected_costs(x, p.B, p.base_demand, p.lam, p.p_w, p.p_r, p.w)
    assert np.allclose(ours, market.expected_cost(x, p.B, p), atol=1e-13)


def test_brute_force_lipschitz_linear():
    A = np.array([[3.0, 0.0], [0.0, 1.0]])
    pairs = [(np.array([1.0, 0.0]), np.zeros(2)), (np.zeros(2), np.zeros(2))]
    assert oracle.brute_force_lipschitz(lambda x: A @ x, pairs) == 3.0


def test_oracle_shares_no_code_with_validated_modules():
    tree = ast.parse(inspect.getsource(oracle))
    imported = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            imported.add(node.module)
        elif isinstance(node, ast.Import):
            imported.update(a.name for a in node.names)
    assert imported <= {"__future__", "math", "dataclasses", "numpy", "errors"}
