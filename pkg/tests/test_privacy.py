import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from cdpnes.engine import NotAdjacentError, RunParams
from cdpnes.games import BoxConstraint, ConnectivityControlGame, QuadraticGame, estimate_constants
from cdpnes.graph import build_ring
from cdpnes.privacy import (NoiseParams, PrivacyBudget, PrivacyError, budget_report,
                            choose_noise, implied_epsilon, laplace_cdf, laplace_from_uniform,
                            laplace_sample, min_noise_scale, step_sensitivity_check)
from cdpnes.rng import stream


def test_zero_scale_is_silent():
    np.testing.assert_array_equal(laplace_sample(0.0, (3, 4), stream(0, 0, "noise")), 0.0)
    assert NoiseParams.uniform(0.0, 3).silent


def test_negative_scale():
    with pytest.raises(PrivacyError):
        laplace_sample(-1.0, (2,), stream(0, 0, "noise"))


def test_laplace_moments():
    x = laplace_sample(1.0, 1_000_000, stream(1, 0, "noise"))
    assert abs(x.var() / 2.0 - 1.0) < 0.01
    assert abs(x.mean()) < 3 * np.sqrt(2 / 1e6)


def test_laplace_inverse_cdf():
    u = np.array([0.5, 0.75, 0.25])
    np.testing.assert_allclose(laplace_from_uniform(u, 2.0), [0.0, 2 * np.log(2), -2 * np.log(2)])
    np.testing.assert_allclose(laplace_cdf(laplace_from_uniform(u, 2.0), 2.0), u)


def test_laplace_endpoint_finite():
    assert np.isfinite(laplace_from_uniform(np.array([0.0]), 1.0)).all()


def test_laplace_ks():
    x = laplace_sample(3.0, 200_000, stream(2, 0, "noise"))
    assert stats.kstest(x, "laplace", args=(0, 3.0)).statistic < 0.005


def test_noise_params():
    p = NoiseParams(np.array([0.5, 2.0, 1.0]))
    assert p.theta_bar == 2.0 and not p.silent


def test_min_noise_scale_examples():
    b = PrivacyBudget(1.0, 8000, 10.0, 0.01, 0.01)
    assert min_noise_scale(b)[0] == pytest.approx(16.0)
    assert min_noise_scale(PrivacyBudget(2.0, 8000, 10.0, 0.01, 0.01))[0] == pytest.approx(8.0)
    assert min_noise_scale(PrivacyBudget(1.0, 0, 10.0, 0.01, 0.01))[0] == 0.0


def test_choose_noise_strictly_above():
    b = PrivacyBudget([1.0, 2.0], 100, 5.0, 0.1, 0.1)
    assert np.all(choose_noise(b).theta > min_noise_scale(b))
    with pytest.raises(PrivacyError):
        choose_noise(b, factor=1.0)


@settings(max_examples=50, deadline=None)
@given(eps=st.floats(0.1, 10), K=st.integers(1, 10_000), M=st.floats(0.1, 1e3),
       g=st.floats(1e-3, 1), e=st.floats(1e-3, 1))
def test_budget_monotone(eps, K, M, g, e):
    base = min_noise_scale(PrivacyBudget(eps, K, M, g, e))[0]
    assert min_noise_scale(PrivacyBudget(eps, K, M, 2 * g, e))[0] > base
    assert min_noise_scale(PrivacyBudget(eps, K, M, g, 2 * e))[0] > base
    assert min_noise_scale(PrivacyBudget(eps, 2 * K, M, g, e))[0] > base
    assert min_noise_scale(PrivacyBudget(eps, K, 2 * M, g, e))[0] > base
    assert min_noise_scale(PrivacyBudget(2 * eps, K, M, g, e))[0] < base


def test_implied_epsilon_inverts():
    b = PrivacyBudget(1.5, 300, 4.0, 0.05, 0.2)
    assert implied_epsilon(min_noise_scale(b), 0.05, 0.2, 300, 4.0)[0] == pytest.approx(1.5)
    assert np.isinf(implied_epsilon(0.0, 0.05, 0.2, 300, 4.0))


def test_invalid_budget():
    with pytest.raises(PrivacyError):
        PrivacyBudget(0.0, 10, 1.0, 0.1, 0.1)


def test_budget_report():
    text = budget_report(PrivacyBudget([1.0, 2.0], 8000, 10.0, 0.01, 0.01))
    lines = text.strip().splitlines()
    assert lines[0] == "agent,epsilon,theta_min,theta_chosen"
    assert lines[1].startswith("0,1.0,16.0,")
    assert float(lines[2].split(",")[3]) == pytest.approx(8.08)


def _params(gamma=0.05, eta=0.1, K=100, noise=0.3, box=(-5, 5)):
    return RunParams(gamma=gamma, eta=eta, alpha=0.5, K=K, noise=noise, projected=True,
                     box=BoxConstraint.uniform(*box), seed=3)


def test_sensitivity_identical_games():
    g = QuadraticGame.random(4, seed=1, constraint=BoxConstraint.uniform(-5, 5))
    res = step_sensitivity_check(g, g, build_ring(4), _params(), M=1.0)
    assert res.i0 is None and res.max_l1 == 0.0


def test_sensitivity_zero_gamma():
    box = BoxConstraint.uniform(-5, 5)
    g1 = QuadraticGame(2 * np.eye(3), np.zeros(3), constraint=box)
    g2 = QuadraticGame(2 * np.eye(3), np.array([0.0, 1.0, 0.0]), constraint=box)
    res = step_sensitivity_check(g1, g2, build_ring(3), _params(gamma=0.0), M=1.0)
    assert res.i0 == 1 and res.max_l1 == 0.0


def test_sensitivity_connectivity_pair():
    g1 = ConnectivityControlGame(n=10)
    c = g1.c.copy()
    c[0] = [3.0, -2.0]
    g2 = QuadraticGame(g1.Q, c, constraint=g1.constraint)
    M = max(estimate_constants(g1).M, estimate_constants(g2).M)
    params = RunParams(gamma=0.01, eta=0.01, alpha=0.01, K=100, noise=5.0, projected=True,
                       box=g1.constraint, seed=0)
    res = step_sensitivity_check(g1, g2, build_ring(10), params, M=M)
    assert res.i0 == 0 and 0 < res.max_l1 <= res.bound


def test_sensitivity_not_adjacent():
    box = BoxConstraint.uniform(-1, 1)
    g1 = QuadraticGame(2 * np.eye(3), np.zeros(3), constraint=box)
    g2 = QuadraticGame(2 * np.eye(3), np.ones(3), constraint=box)
    with pytest.raises(NotAdjacentError):
        step_sensitivity_check(g1, g2, build_ring(3), _params(), M=1.0)


def test_sensitivity_violation_raises():
    box = BoxConstraint.uniform(-5, 5)
    g1 = QuadraticGame(2 * np.eye(3), np.zeros(3), constraint=box)
    g2 = QuadraticGame(2 * np.eye(3), np.array([0.0, 4.0, 0.0]), constraint=box)
    with pytest.raises(PrivacyError):
        step_sensitivity_check(g1, g2, build_ring(3), _params(), M=0.01)
