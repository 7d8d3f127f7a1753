import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdpnes.graph import (GraphError, IndefiniteWarning, MixingMatrix,
                          build_random_strongly_connected, build_ring, frob_norm_i_minus_w,
                          lambda_min_nonzero, load_csv, load_edge_list, save_csv, validate)


def test_ring_three():
    W = build_ring(3, 0.5)
    np.testing.assert_array_equal(W.W, [[0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5]])


def test_ring_two():
    np.testing.assert_array_equal(build_ring(2, 0.5).W, [[0.5, 0.5], [0.5, 0.5]])


def test_ring_fifty_validates():
    assert validate(build_ring(50, 0.5)).ok


@pytest.mark.parametrize("n", [0, 1])
def test_ring_too_small(n):
    with pytest.raises(GraphError):
        build_ring(n)


def test_ring_bad_weight():
    with pytest.raises(GraphError):
        build_ring(4, 1.0)


def test_random_without_extra_edges_is_a_ring():
    W = build_random_strongly_connected(5, 0.0, seed=3)
    np.testing.assert_array_equal(W.W, build_ring(5, 0.5).W)


def test_random_fifty_validates():
    assert validate(build_random_strongly_connected(50, 0.1, seed=7)).ok


def test_random_deterministic():
    a = build_random_strongly_connected(20, 0.3, seed=11)
    b = build_random_strongly_connected(20, 0.3, seed=11)
    assert a == b
    assert a != build_random_strongly_connected(20, 0.3, seed=12)


def test_random_rows_uniform_over_support():
    W = build_random_strongly_connected(15, 0.4, seed=2).W
    for row in W:
        nz = row[row > 0]
        np.testing.assert_allclose(nz, 1.0 / nz.size)


def test_validate_identity_not_connected():
    rep = validate(np.eye(3))
    assert rep.row_stochastic and not rep.strongly_connected and not rep.ok


def test_validate_scaled_row():
    W = build_ring(3, 0.5).W.copy()
    W[1] *= 2
    rep = validate(W)
    assert not rep.row_stochastic
    assert any("row" in f for f in rep.failures())


def test_validate_negative_entry():
    W = np.array([[1.5, -0.5], [0.5, 0.5]])
    rep = validate(W)
    assert not rep.entries_in_range


def test_mixing_matrix_rejects_non_square():
    with pytest.raises(GraphError):
        MixingMatrix(np.ones((2, 3)))


def test_single_agent_graph():
    assert validate(MixingMatrix([[1.0]])).ok


def test_neighbours():
    W = build_ring(4, 0.5)
    assert list(W.in_neighbors(0)) == [0, 1]
    assert sorted(W.out_neighbors(0)) == [0, 3]


@pytest.mark.parametrize("n,expected", [(3, np.sqrt(1.5)), (2, 1.0)])
def test_frob_ring(n, expected):
    assert frob_norm_i_minus_w(build_ring(n, 0.5)) == pytest.approx(expected, abs=1e-12)


def test_frob_identity():
    assert frob_norm_i_minus_w(np.eye(3)) == 0.0


def test_frob_row_decomposition():
    W = build_random_strongly_connected(12, 0.3, seed=5)
    D = np.eye(12) - W.W
    assert frob_norm_i_minus_w(W) ** 2 == pytest.approx(sum(r @ r for r in D), rel=1e-12)


def test_lambda_ring_two():
    assert lambda_min_nonzero(build_ring(2, 0.5)) == pytest.approx(1.0, abs=1e-12)


def test_lambda_ring_three():
    # symmetric part of I - W for ring(3, 0.5) has eigenvalues {0, 0.75, 0.75}
    assert lambda_min_nonzero(build_ring(3, 0.5)) == pytest.approx(0.75, abs=1e-12)


def test_lambda_identity_has_no_nonzero_eigenvalue():
    with pytest.raises(GraphError):
        lambda_min_nonzero(np.eye(3))


def test_lambda_indefinite_flagged():
    W = build_random_strongly_connected(10, 0.3, seed=1)
    with pytest.warns(IndefiniteWarning):
        lam = lambda_min_nonzero(W)
    assert lam < 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 12))
def test_lambda_permutation_invariant(seed, n):
    W = build_random_strongly_connected(n, 0.3, seed=seed).W
    perm = np.random.default_rng(seed).permutation(n)
    Wp = W[np.ix_(perm, perm)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IndefiniteWarning)
        assert lambda_min_nonzero(Wp) == pytest.approx(lambda_min_nonzero(W), abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 30), p=st.floats(0.0, 1.0))
def test_generated_graphs_valid(seed, n, p):
    W = build_random_strongly_connected(n, p, seed=seed)
    assert np.abs(W.W.sum(axis=1) - 1).max() <= 1e-12
    assert validate(W).strongly_connected


def test_csv_roundtrip(tmp_path):
    W = build_random_strongly_connected(6, 0.5, seed=4)
    save_csv(W, tmp_path / "w.csv")
    assert load_csv(tmp_path / "w.csv") == W


def test_csv_bad_row_reports_line(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("2\n0.5,0.5\n0.5,x\n")
    with pytest.raises(GraphError, match=":3"):
        load_csv(p)


def test_edge_list(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("0 0 0.5\n0 1 0.5\n1 1 0.5\n1 0 0.5\n")
    np.testing.assert_array_equal(load_edge_list(p).W, build_ring(2, 0.5).W)


def test_edge_list_normalize(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("0 0 1\n0 1 1\n1 1 2\n1 2 2\n2 2 3\n2 0 3\n")
    with pytest.raises(GraphError):
        load_edge_list(p)
    np.testing.assert_array_equal(load_edge_list(p, normalize=True).W, build_ring(3, 0.5).W)
