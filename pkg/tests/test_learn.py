import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ddgame.distmap import Dataset, GaussianBase, LocationScaleMap, UniformBox, collect_dataset
from ddgame.errors import ERMDiverged, PreconditionFailed, SingularGram
from ddgame.game import BoxSet
from ddgame.learn import (
    BoundReport,
    approx_and_excess_bounds,
    calibrate_theta,
    check_sample_size,
    empirical_risk,
    erm_constant,
    erm_error_bound,
    fit_erm_projected,
    fit_least_squares,
    project_frobenius,
    projected_gradient_residual,
    risk_gradient,
    subexponential_modulus,
    zeta,
)


def _noisy(m, B, seed, std=1.0):
    B = np.atleast_2d(B)
    dmap = LocationScaleMap(B, GaussianBase(np.zeros(B.shape[0]), std))
    return collect_dataset(dmap, UniformBox(BoxSet.cube(-1, 1, B.shape[1])), m, np.random.default_rng(seed))


def test_noiseless_recovery():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((3, 5))
    X = rng.uniform(-1, 1, (10, 5))
    fit = fit_least_squares(Dataset(X, X @ B.T))
    assert np.linalg.norm(fit.B_hat - B) <= 1e-8
    assert fit.ell == 15


def test_zero_target():
    X = np.random.default_rng(1).random((8, 3))
    assert np.all(fit_least_squares(Dataset(X, np.zeros((8, 2)))).B_hat == 0)


def test_hand_normal_equations():
    data = Dataset(np.array([[1.0], [2.0], [3.0]]), np.array([2.0, 3.9, 6.1]))
    assert fit_least_squares(data).B_hat[0, 0] == pytest.approx(28.1 / 14, abs=1e-12)


def test_singular_gram_errors():
    with pytest.raises(SingularGram):
        fit_least_squares(Dataset(np.ones((2, 3)), np.ones(2)))
    X = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
    with pytest.raises(SingularGram):
        fit_least_squares(Dataset(X, np.ones(5)))
    # the opt-in ridge returns a finite answer instead
    assert np.all(np.isfinite(fit_least_squares(Dataset(X, np.ones(5)), ridge=True).B_hat))


def test_first_order_condition():
    data = _noisy(500, np.random.default_rng(2).standard_normal((2, 4)), 3)
    B_hat = fit_least_squares(data).B_hat
    scale = np.linalg.norm(data.Z.T @ data.X / data.m)
    assert np.linalg.norm(risk_gradient(B_hat, data)) <= 1e-8 * scale


def test_projected_gd_matches_closed_form_inside_ball():
    data = _noisy(400, [[0.3, -0.2, 0.1]], 4)
    ls = fit_least_squares(data).B_hat
    pgd = fit_erm_projected(data, ball_radius=10.0, steps=5000).B_hat
    assert np.linalg.norm(pgd - ls) <= 1e-6


def test_projected_gd_zero_radius():
    data = _noisy(50, [[1.0, 2.0]], 5)
    assert np.all(fit_erm_projected(data, 0.0, steps=10).B_hat == 0)


def test_projected_gd_binding_ball():
    data = _noisy(2000, [[1.0, -2.0, 0.5]], 6, std=0.01)
    ls = fit_least_squares(data).B_hat
    R = np.linalg.norm(ls) / 2
    hyp = fit_erm_projected(data, R, steps=20000)
    assert abs(np.linalg.norm(hyp.B_hat) - R) <= 1e-9
    step = 1.0 / np.linalg.eigvalsh(data.X.T @ data.X / data.m)[-1]
    assert projected_gradient_residual(hyp.B_hat, data, R, step) < 1e-6


def test_projected_gd_divergence_detected():
    data = _noisy(100, [[1.0, 1.0]], 7)
    with pytest.raises(ERMDiverged):
        fit_erm_projected(data, 1e6, steps=200, step_size=100.0, B0=[[0.5, 0.5]])


def test_risk_gradient_matches_finite_difference():
    data = _noisy(60, [[0.4, -0.1]], 8)
    B = np.array([[0.1, 0.2]])
    g = risk_gradient(B, data)
    h = 1e-6
    for j in range(2):
        E = np.zeros_like(B)
        E[0, j] = h
        fd = (empirical_risk(B + E, data) - empirical_risk(B - E, data)) / (2 * h)
        assert fd == pytest.approx(g[0, j], rel=1e-6)


@given(arrays(float, (3, 4), elements=st.floats(-1e3, 1e3)), st.floats(0, 100))
def test_frobenius_projection(B, r):
    P = project_frobenius(B, r)
    assert np.linalg.norm(P) <= r + 1e-12 * max(1.0, r)
    if np.linalg.norm(B) <= r:
        assert np.array_equal(P, B)


def test_sample_size_examples():
    assert check_sample_size(10, 100, 0.1) is False
    assert check_sample_size(100, 1, 0.25) is True
    for bad in (0.0, 0.5, 0.7):
        with pytest.raises(ValueError):
            check_sample_size(100, 1, bad)


def test_zeta_examples():
    assert zeta(math.e**2, math.exp(-1), 1) == pytest.approx(2 / math.e, rel=1e-14)
    ratio = zeta(1000, 0.1, 40_000) / zeta(1000, 0.1, 10_000)
    assert ratio == pytest.approx(2.0, rel=1e-3)
    with pytest.raises(ValueError):
        zeta(1, 0.1, 1)


def test_erm_bound_example():
    m, delta, ell = 1000, 0.1, 4
    expected = 4 * math.sqrt(math.log(m) * (ell + math.log(1 / delta)) / m)
    assert erm_constant(1.0, 15.0, 1.0, 0.5) == 4.0
    assert erm_error_bound(m, delta, ell, 1.0, 15.0, 1.0, 0.5) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(PreconditionFailed):
        erm_error_bound(10, 0.1, 100, 1.0, 1.0, 1.0, 1.0)


def test_bound_report_structure(tmp_path):
    rep = approx_and_excess_bounds(1000, 0.1, 4, 1.0, 15.0, 1.0, 0.5, eta=0.0, eps=0.0, L_z=2.0, L_bar=3.0, diam=0.5)
    assert rep.approx_bound == 0.0
    rep = approx_and_excess_bounds(1000, 0.1, 4, 1.0, 15.0, 1.0, 0.5, eta=0.2, eps=1.5, L_z=2.0, L_bar=3.0, diam=0.5)
    assert rep.excess_risk_bound - 2 * rep.approx_bound == pytest.approx(2 * math.sqrt(2) * 3.0 * 0.5, rel=1e-12)
    assert BoundReport.from_text(rep.to_text()) == rep
    assert "sample_size_ok=true" in rep.to_text()
    with pytest.raises(ValueError):
        approx_and_excess_bounds(1000, 0.1, 4, 1.0, 15.0, 1.0, 0.5, eta=-1.0, eps=0.0, L_z=1.0, L_bar=1.0, diam=1.0)


def test_subexponential_modulus_of_exponential_law():
    # |X| with X ~ Laplace(1) has P(|X| >= t) = exp(-t) <= 2 exp(-t), so theta ~ 1
    S = np.random.default_rng(9).laplace(size=(20_000, 1))
    theta = subexponential_modulus(S)
    assert 0.5 <= theta <= 1.5
    assert subexponential_modulus(3 * S) == pytest.approx(3 * theta, rel=1e-12)


def test_calibrated_theta_positive():
    data = _noisy(500, [[0.5, 0.5]], 10)
    theta = calibrate_theta(data, [[0.5, 0.5]], 1.0, np.random.default_rng(0))
    assert theta > 0 and np.isfinite(theta)


def test_erm_rate_slope_small():
    # coarse version of the rate test; the full criterion runs in the acceptance module
    B = np.array([[0.3, -0.4]])
    ms = [100, 1000, 10_000]
    med = [np.median([np.linalg.norm(fit_least_squares(_noisy(m, B, s)).B_hat - B) for s in range(20)]) for m in ms]
    slope = np.polyfit(np.log(ms), np.log(med), 1)[0]
    assert -0.65 <= slope <= -0.35
