import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pslp.errors import BadNeighborCount
from pslp.graph import build_graph, gaussian_affinity, knn_sparsify, normalized_adjacency, pairwise_sq_dist, symmetrize_max


def _loop_sq_dist(X):
    T, d = X.shape
    out = np.zeros((T, T))
    for i in range(T):
        for j in range(T):
            out[i, j] = sum((X[i, k] - X[j, k]) ** 2 for k in range(d))
    return out


def _check_graph(g, B):
    A, L = g.affinity, g.normalized
    assert (A == A.T).all()
    assert (np.diag(A) == 0).all()
    assert (A >= 0).all()
    # each row keeps B entries before the max-merge, so at most 2BT survive overall
    assert (A > 0).sum() <= 2 * B * A.shape[0]
    np.testing.assert_array_equal(L, L.T)
    assert (g.degrees > 0).all()
    assert np.abs(np.linalg.eigvalsh(L)).max() <= 1 + 1e-9


def test_sq_dist_small_cases():
    np.testing.assert_array_equal(pairwise_sq_dist(np.array([[0.0], [0.0]])), np.zeros((2, 2)))
    np.testing.assert_array_equal(pairwise_sq_dist(np.array([[0.0], [3.0]])), [[0, 9], [9, 0]])


def test_sq_dist_matches_loop():
    X = np.random.default_rng(0).standard_normal((6, 4))
    D = pairwise_sq_dist(X)
    np.testing.assert_allclose(D, _loop_sq_dist(X), atol=1e-10)
    assert (D == D.T).all() and (np.diag(D) == 0).all() and (D >= 0).all()


def test_affinity_identical_points():
    np.testing.assert_array_equal(gaussian_affinity(np.ones((4, 3)), 7.0), np.ones((4, 4)))


def test_affinity_two_points():
    A = gaussian_affinity(np.array([[0.0], [1.0]]), 1.0)
    assert A[0, 1] == pytest.approx(math.exp(-1), abs=1e-12)
    assert A[0, 1] == pytest.approx(0.367879, abs=1e-6)


def test_affinity_composes_with_distance_oracle():
    X = np.random.default_rng(1).standard_normal((5, 3))
    np.testing.assert_allclose(gaussian_affinity(X, 10.0), np.exp(-10.0 * _loop_sq_dist(X)), atol=1e-12)


def test_affinity_monotone():
    X = np.random.default_rng(2).standard_normal((15, 3))
    D = pairwise_sq_dist(X).ravel()
    A = gaussian_affinity(X, 2.0).ravel()
    order = np.argsort(D, kind="stable")
    assert (np.diff(A[order]) <= 0).all()


def test_knn_example():
    A = np.array([[1, 0.9, 0.1], [0.9, 1, 0.5], [0.1, 0.5, 1]])
    np.testing.assert_array_equal(knn_sparsify(A, 1), [[0, 0.9, 0], [0.9, 0, 0], [0, 0.5, 0]])


def test_knn_keep_all():
    A = gaussian_affinity(np.random.default_rng(3).standard_normal((6, 2)), 1.0)
    expected = A.copy()
    np.fill_diagonal(expected, 0)
    np.testing.assert_array_equal(knn_sparsify(A, 5), expected)


def test_knn_per_row_sort_oracle():
    rng = np.random.default_rng(4)
    M = rng.random((10, 10))
    A = (M + M.T) / 2
    S = knn_sparsify(A, 3)
    for i in range(10):
        others = [A[i, j] for j in range(10) if j != i]
        kept = [S[i, j] for j in range(10) if S[i, j] != 0]
        dropped = [A[i, j] for j in range(10) if j != i and S[i, j] == 0]
        assert len(kept) == 3
        assert sorted(kept) == sorted(others, reverse=True)[:3][::-1]
        assert min(kept) >= max(dropped)
        assert S[i, i] == 0


def test_knn_tie_break_lowest_index():
    A = np.array([[1.0, 0.5, 0.5, 0.5], [0.5, 1, 0.5, 0.5], [0.5, 0.5, 1, 0.5], [0.5, 0.5, 0.5, 1]])
    S = knn_sparsify(A, 2)
    assert (S[0] > 0).tolist() == [False, True, True, False]
    assert (S[3] > 0).tolist() == [True, True, False, False]


def test_knn_entries_are_subset():
    rng = np.random.default_rng(5)
    A = rng.random((12, 12))
    A = A + A.T
    S = knn_sparsify(A, 4)
    mask = S != 0
    np.testing.assert_array_equal(S[mask], A[mask])


@pytest.mark.parametrize("B", [0, 3, 4])
def test_knn_bad_counts(B):
    with pytest.raises(BadNeighborCount):
        knn_sparsify(np.ones((3, 3)), B)


def test_symmetrize():
    np.testing.assert_array_equal(symmetrize_max(np.array([[0, 0.5], [0, 0]])), [[0, 0.5], [0.5, 0]])
    A = np.array([[0, 0.2], [0.2, 0]])
    np.testing.assert_array_equal(symmetrize_max(A), A)
    S = knn_sparsify(np.random.default_rng(6).random((8, 8)), 2)
    out = symmetrize_max(S)
    assert not (out - out.T).any()


def test_normalized_adjacency_two_node():
    L, deg = normalized_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_array_equal(deg, [1, 1])
    np.testing.assert_array_equal(L, [[0, 1], [1, 0]])
    for w in (1e-6, 0.3, 17.0):
        L, _ = normalized_adjacency(np.array([[0.0, w], [w, 0.0]]))
        np.testing.assert_allclose(L, [[0, 1], [1, 0]], atol=1e-15)


def test_normalized_adjacency_spectrum():
    rng = np.random.default_rng(7)
    M = rng.random((12, 12))
    A = M + M.T
    np.fill_diagonal(A, 0)
    L, _ = normalized_adjacency(A)
    ev = np.linalg.eigvalsh(L)
    assert ev.min() >= -1 - 1e-9 and ev.max() <= 1 + 1e-9


def test_isolated_node_floor():
    A = np.zeros((3, 3))
    A[0, 1] = A[1, 0] = 1.0
    L, deg = normalized_adjacency(A)
    assert deg[2] == 1e-12
    assert np.isfinite(L).all() and (L[2] == 0).all()


def test_build_graph_two_pairs():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [50.0, 0.0], [50.0, 0.0]])
    g = build_graph(X, 10.0, 1)
    expected = np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=float)
    np.testing.assert_array_equal(g.affinity, expected)


def test_build_graph_keep_all():
    X = np.random.default_rng(8).standard_normal((7, 3))
    g = build_graph(X, 0.5, 6)
    A = gaussian_affinity(X, 0.5)
    np.fill_diagonal(A, 0)
    np.testing.assert_array_equal(g.affinity, symmetrize_max(A))


def test_build_graph_invariants_small():
    _check_graph(build_graph(np.random.default_rng(9).standard_normal((5, 3)), 1.0, 2), 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 64), st.integers(1, 10), st.floats(0.1, 20))
def test_build_graph_invariants(seed, T, B, gamma):
    B = min(B, T - 1)
    X = np.random.default_rng(seed).standard_normal((T, 4)) * 0.5
    _check_graph(build_graph(X, gamma, B), B)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(4, 20))
def test_build_graph_permutation_equivariant(seed, T):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((T, 3))
    perm = rng.permutation(T)
    g = build_graph(X, 2.0, 3)
    gp = build_graph(X[perm], 2.0, 3)
    np.testing.assert_allclose(gp.affinity, g.affinity[np.ix_(perm, perm)], atol=1e-14)
    np.testing.assert_allclose(gp.normalized, g.normalized[np.ix_(perm, perm)], atol=1e-14)
