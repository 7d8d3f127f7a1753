import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdpnes.games import (AssumptionWarning, BoxConstraint, ConnectivityControlGame, Game,
                          GameError, NoUniqueNEError, NumericInputError, QuadraticGame,
                          UnsupportedGameError, estimate_constants, game_mapping,
                          gradient_l1_bound, gradient_l1_bound_corners, partial_gradient,
                          project, solve_ne)


@pytest.fixture(scope="module")
def conn():
    return ConnectivityControlGame()


def test_connectivity_gradient_zero_at_ne(conn):
    x = np.full((50, 2), -0.5)
    for i in range(50):
        np.testing.assert_allclose(partial_gradient(conn, i, x), 0.0, atol=1e-12)


def test_connectivity_gradient_hand_value(conn):
    x = np.random.default_rng(0).normal(size=(50, 2))
    x[0], x[1] = (0, 0), (1, 1)
    np.testing.assert_allclose(partial_gradient(conn, 0, x), [-1.0, -1.0])


def test_quadratic_gradient_zero():
    g = QuadraticGame(2 * np.eye(3), np.zeros(3))
    np.testing.assert_array_equal(partial_gradient(g, 1, np.zeros(3)), [0.0])


def test_non_finite_input():
    g = QuadraticGame(2 * np.eye(2), np.zeros(2))
    with pytest.raises(NumericInputError):
        partial_gradient(g, 0, np.array([np.nan, 0.0]))


def test_mapping_at_ne_vanishes(conn):
    np.testing.assert_allclose(game_mapping(conn, np.full((50, 2), -0.5)), 0.0, atol=1e-12)


def test_mapping_is_affine(rng):
    g = QuadraticGame.random(6, seed=1)
    x = rng.normal(size=6)
    np.testing.assert_allclose(game_mapping(g, x).ravel(), g.Q @ x + g.c.ravel(), rtol=1e-14)


def test_mapping_rows_match_partial_gradients(conn, rng):
    x = rng.normal(size=(50, 2))
    F = game_mapping(conn, x)
    for i in range(50):
        np.testing.assert_allclose(F[i], partial_gradient(conn, i, x), rtol=1e-14)


def test_local_gradients_match_partial(conn, rng):
    X = rng.normal(size=(50, 100))
    G = conn.local_gradients(X)
    for i in (0, 17, 49):
        np.testing.assert_allclose(G[i], partial_gradient(conn, i, X[i]), rtol=1e-13, atol=1e-13)


def test_solve_ne_connectivity(conn):
    x = solve_ne(conn)
    assert x.shape == (50, 2)
    np.testing.assert_array_equal(x, -0.5)


def test_solve_ne_quadratic():
    g = QuadraticGame(2 * np.eye(4), -2 * np.ones(4))
    np.testing.assert_allclose(solve_ne(g).ravel(), 1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 15), d=st.integers(1, 3))
def test_solve_ne_residual(seed, n, d):
    g = QuadraticGame.random(n, seed=seed, d=d)
    assert np.linalg.norm(game_mapping(g, solve_ne(g))) <= 1e-10


def test_singular_q():
    with pytest.raises(NoUniqueNEError):
        solve_ne(QuadraticGame(np.zeros((2, 2)), np.ones(2)))


def test_generic_game_unsupported():
    class Custom(Game):
        n, d = 2, 1

        def partial_gradient(self, i, x_est):
            return np.asarray(x_est, dtype=float).reshape(2, 1)[i] ** 3

    with pytest.raises(UnsupportedGameError):
        solve_ne(Custom())


def test_constants_two_identity():
    c = estimate_constants(QuadraticGame(2 * np.eye(3), np.zeros(3)), BoxConstraint.uniform(-1, 1))
    assert c.mu_r == pytest.approx(2.0)
    np.testing.assert_allclose(c.L, 2.0)
    assert c.L_m == pytest.approx(2.0)
    assert c.M == pytest.approx(2.0)


def test_connectivity_constants(conn):
    c = estimate_constants(conn)
    Q = np.diag(2.0 * np.arange(1, 51) + 2)
    for i in range(50):
        Q[i, (i + 1) % 50] = -2.0
    assert c.mu_r == pytest.approx(np.linalg.eigvalsh(0.5 * (Q + Q.T))[0], rel=1e-12)
    assert c.L_m == pytest.approx(np.linalg.norm(Q[49]))
    # agent 50: 2*50 + 2 = 102 on its own action, -2 on agent 1, c = 50
    assert c.M == pytest.approx(2 * (102 * 10 + 2 * 10 + 50))
    assert c.certified and c.mu_r > 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 4), d=st.integers(1, 2))
def test_gradient_bound_matches_corners(seed, n, d):
    g = QuadraticGame.random(n, seed=seed, d=d, scale=3.0)
    box = BoxConstraint.uniform(-2.0, 1.5)
    assert gradient_l1_bound(g.Q, g.c, box) == pytest.approx(gradient_l1_bound_corners(g, box),
                                                             rel=1e-12)


def test_sampling_box_not_certified():
    g = QuadraticGame(2 * np.eye(2), np.zeros(2))
    c = estimate_constants(g, (-1, 1))
    assert not c.certified
    assert any("not certified" in n for n in c.notes)


def test_non_monotone_warns():
    with pytest.warns(AssumptionWarning):
        estimate_constants(QuadraticGame(np.diag([1.0, -1.0]), np.zeros(2)), (-1, 1))


def test_monte_carlo_constants_for_generic_game():
    class Cubic(Game):
        n, d = 2, 1
        constraint = BoxConstraint.uniform(-1, 1)

        def partial_gradient(self, i, x_est):
            x = np.asarray(x_est, dtype=float).reshape(2, 1)
            return 3 * x[i] + 0.1 * x[1 - i] ** 3

    with warnings.catch_warnings():
        warnings.simplefilter("error")
        c = estimate_constants(Cubic(), n_samples=500, seed=1)
    assert not c.certified
    assert 2.0 < c.mu_r <= 3.5 and c.L_m >= 3.0


def test_project():
    box = BoxConstraint.uniform(-10, 10)
    assert project(box, np.array([11.0]))[0] == 10.0
    x = np.array([1.0, -3.0])
    np.testing.assert_array_equal(project(box, x), x)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=6, max_size=6))
def test_project_nonexpansive_idempotent(vals):
    box = BoxConstraint.uniform(-10, 10)
    x, y = np.array(vals[:3]), np.array(vals[3:])
    px, py = project(box, x), project(box, y)
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-12
    np.testing.assert_array_equal(project(box, px), px)


def test_box_ordering():
    with pytest.raises(GameError):
        BoxConstraint.uniform(1, -1)


def test_restricted_monotonicity_sampled(rng):
    g = QuadraticGame.random(8, seed=3, mu=0.7)
    c = estimate_constants(g, (-1, 1))
    xs = solve_ne(g)
    for _ in range(200):
        x = rng.uniform(-1, 1, size=xs.shape)
        lhs = np.sum((game_mapping(g, x) - game_mapping(g, xs)) * (x - xs))
        assert lhs >= (c.mu_r - 1e-8) * np.sum((x - xs) ** 2)


def test_lipschitz_sampled(rng):
    g = ConnectivityControlGame(n=10)
    c = estimate_constants(g)
    for _ in range(1000):
        x, y = rng.uniform(-10, 10, size=(2, 10, 2))
        i = rng.integers(10)
        gap = np.linalg.norm(partial_gradient(g, i, x) - partial_gradient(g, i, y))
        assert gap <= (c.L[i] + 1e-8) * np.linalg.norm(x - y)


def test_finite_difference_gradient(rng):
    g = ConnectivityControlGame(n=6)
    x = rng.uniform(-3, 3, size=(6, 2))
    h = 1e-5
    for i in range(6):
        fd = np.zeros(2)
        for k in range(2):
            xp, xm = x.copy(), x.copy()
            xp[i, k] += h
            xm[i, k] -= h
            fd[k] = (g.cost(i, xp) - g.cost(i, xm)) / (2 * h)
        np.testing.assert_allclose(fd, partial_gradient(g, i, x), rtol=1e-6, atol=1e-6)


def test_quadratic_csv(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("2,0\n0,2\n-2,-2\n")
    g = QuadraticGame.from_csv(p)
    np.testing.assert_allclose(solve_ne(g).ravel(), [1.0, 1.0])


def test_quadratic_csv_bad(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("2,0\n0,a\n1,1\n")
    with pytest.raises(GameError, match=":2"):
        QuadraticGame.from_csv(p)
