import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pslp.errors import BadAlpha, ConvergenceWarning, DimensionMismatch, LabelOutOfRange, NoConvergence, SingularSystem
from pslp.propagation import (
    LabelMatrix,
    PropagationMatrix,
    clamp_support,
    iterative_oracle,
    propagate,
    propagation_matrix,
    row_normalize_queries,
    sinkhorn_normalize,
)
from pslp.selftest import random_instance

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def _eig_inverse(L, alpha):
    # independent route: spectral decomposition of the symmetric L
    w, V = np.linalg.eigh(L)
    return (V / (1.0 - alpha * w)) @ V.T


def test_alpha_zero_is_identity():
    L = np.random.default_rng(0).random((5, 5))
    L = (L + L.T) / 4
    np.testing.assert_allclose(propagation_matrix(L, 0.0).values, np.eye(5), atol=1e-15)


def test_two_node_hand_inverse():
    P = propagation_matrix(SWAP, 0.5).values
    np.testing.assert_allclose(P, np.array([[1, 0.5], [0.5, 1]]) / 0.75, atol=1e-12)
    np.testing.assert_allclose(P, [[4 / 3, 2 / 3], [2 / 3, 4 / 3]], atol=1e-12)


def test_no_edges_identity():
    np.testing.assert_array_equal(propagation_matrix(np.zeros((3, 3)), 0.9).values, np.eye(3))


@pytest.mark.parametrize("alpha", [0.0, 0.5, 0.7, 0.9])
def test_matches_eigendecomposition(alpha):
    L, _, _ = random_instance(np.random.default_rng(1), 40, 3, alpha)
    P = propagation_matrix(L, alpha)
    np.testing.assert_allclose(P.values, _eig_inverse(L, alpha), atol=1e-10)
    np.testing.assert_array_equal(P.values, P.values.T)


@pytest.mark.parametrize("alpha", [1.0, 1.5, -0.1])
def test_bad_alpha(alpha):
    with pytest.raises(BadAlpha):
        propagation_matrix(SWAP, alpha)


def test_singular_system(monkeypatch):
    # with the guard bypassed, alpha = 1 on a graph with eigenvalue 1 is singular
    monkeypatch.setattr("pslp.propagation.check_alpha", lambda a: None)
    with pytest.raises(SingularSystem):
        propagation_matrix(SWAP, 1.0)


def test_propagate_identity_and_disconnected():
    Z = LabelMatrix(np.random.default_rng(2).random((4, 3)), 1)
    P = propagation_matrix(np.zeros((4, 4)), 0.7)
    np.testing.assert_array_equal(propagate(P, Z).values, Z.values)
    P0 = propagation_matrix(_random_L(4), 0.0)
    np.testing.assert_allclose(propagate(P0, Z).values, Z.values, atol=1e-15)


def _random_L(T, seed=3):
    L, _, _ = random_instance(np.random.default_rng(seed), T, 2, 0.5)
    return L


def test_propagate_episode_scale_matches_oracle():
    L, alpha, Z = random_instance(np.random.default_rng(4), 80, 5, 0.9)
    closed = propagate(propagation_matrix(L, alpha), Z)
    np.testing.assert_allclose(closed.values, iterative_oracle(L, alpha, Z, tol=1e-12).values, atol=1e-8)


def test_propagate_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        propagate(propagation_matrix(np.zeros((3, 3)), 0.5), LabelMatrix(np.ones((4, 2)), 1))


def test_propagate_non_negative():
    L, alpha, Z = random_instance(np.random.default_rng(5), 60, 4, 0.9)
    assert (propagate(propagation_matrix(L, alpha), Z).values >= 0).all()


def test_oracle_alpha_zero_one_step():
    Z = LabelMatrix(np.eye(2), 1)
    np.testing.assert_array_equal(iterative_oracle(SWAP, 0.0, Z).values, np.eye(2))


def test_oracle_two_node():
    out = iterative_oracle(SWAP, 0.5, LabelMatrix(np.eye(2), 1), tol=1e-12)
    np.testing.assert_allclose(out.values, [[4 / 3, 2 / 3], [2 / 3, 4 / 3]], atol=1e-10)


def test_oracle_vs_closed_form_t50():
    L, alpha, Z = random_instance(np.random.default_rng(6), 50, 4, 0.7)
    oracle = iterative_oracle(L, alpha, Z, tol=1e-10)
    np.testing.assert_allclose(oracle.values, propagation_matrix(L, alpha).values @ Z.values, atol=1e-8)


def test_oracle_errors():
    Z = LabelMatrix(np.eye(2), 1)
    with pytest.raises(BadAlpha):
        iterative_oracle(SWAP, 1.0, Z)
    with pytest.raises(ValueError):
        iterative_oracle(SWAP, 0.5, Z, tol=0)
    with pytest.raises(NoConvergence):
        iterative_oracle(SWAP, 0.99, Z, tol=1e-15, max_iter=5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 40), st.integers(2, 6), st.sampled_from([0.0, 0.5, 0.7, 0.9]))
def test_oracle_equivalence_property(seed, T, N, alpha):
    L, alpha, Z = random_instance(np.random.default_rng(seed), T, N, alpha)
    closed = propagate(propagation_matrix(L, alpha), Z).values
    np.testing.assert_allclose(closed, iterative_oracle(L, alpha, Z, tol=1e-13).values, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_scale_invariance_through_normalization(seed, c):
    L, alpha, Z = random_instance(np.random.default_rng(seed), 20, 4, 0.7)
    P = propagation_matrix(L, alpha)
    Pc = PropagationMatrix(c * P.values, alpha)
    a = row_normalize_queries(propagate(P, Z)).query
    b = row_normalize_queries(propagate(Pc, Z)).query
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_row_normalize_examples():
    Z = LabelMatrix(np.array([[1.0, 0.0, 0.0], [2.0, 2.0, 0.0], [0.0, 0.0, 0.0]]), 1)
    out = row_normalize_queries(Z).values
    np.testing.assert_array_equal(out[0], [1, 0, 0])
    np.testing.assert_array_equal(out[1], [0.5, 0.5, 0])
    np.testing.assert_allclose(out[2], [1 / 3] * 3)


def test_row_normalize_leaves_support():
    values = np.random.default_rng(7).random((10, 4)) * 5
    out = row_normalize_queries(LabelMatrix(values, 3))
    np.testing.assert_array_equal(out.support, values[:3])
    np.testing.assert_allclose(out.query.sum(axis=1), 1, atol=1e-12)


def test_clamp_support_examples():
    Z = LabelMatrix(np.array([[0.3, 0.7], [0.2, 0.8]]), 1)
    out = clamp_support(Z, np.array([0]))
    np.testing.assert_array_equal(out.values, [[1, 0], [0.2, 0.8]])


def test_clamp_support_shuffled_labels():
    rng = np.random.default_rng(8)
    y = rng.permutation(np.repeat(np.arange(5), 5))
    Z = LabelMatrix(rng.random((100, 5)), 25)
    out = clamp_support(Z, y)
    for i, label in enumerate(y):
        assert out.values[i].tolist() == [1.0 if j == label else 0.0 for j in range(5)]
    np.testing.assert_array_equal(out.query, Z.query)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.integers(2, 6))
def test_clamp_idempotent(seed, nk, N):
    rng = np.random.default_rng(seed)
    Z = LabelMatrix(rng.random((nk + 5, N)), nk)
    y = rng.integers(0, N, nk)
    once = clamp_support(Z, y)
    np.testing.assert_array_equal(clamp_support(once, y).values, once.values)


def test_clamp_errors():
    Z = LabelMatrix(np.zeros((3, 2)), 2)
    with pytest.raises(LabelOutOfRange):
        clamp_support(Z, np.array([0, 2]))
    with pytest.raises(DimensionMismatch):
        clamp_support(Z, np.array([0]))


def test_sinkhorn_fixed_point():
    K = np.array([[0.5, 0.5], [0.25, 0.75], [0.75, 0.25]])
    out = sinkhorn_normalize(K, np.ones(3), np.full(2, 1.5))
    np.testing.assert_allclose(out, K, atol=1e-12)


def test_sinkhorn_uniform_unchanged():
    K = np.full((6, 3), 1 / 3)
    np.testing.assert_array_equal(sinkhorn_normalize(K, np.ones(6), np.full(3, 2.0)), K)


def test_sinkhorn_random_15x5():
    K = np.random.default_rng(9).random((15, 5)) + 1e-3
    out = sinkhorn_normalize(K, np.ones(15), np.full(5, 3.0), max_iter=50, tol=1e-6)
    assert np.abs(out.sum(1) - 1).max() < 1e-6
    assert np.abs(out.sum(0) - 3).max() < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.integers(1, 5))
def test_sinkhorn_marginals_and_mass(seed, N, per):
    M = N * per
    K = np.random.default_rng(seed).random((M, N)) + 0.01
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        out = sinkhorn_normalize(K, np.ones(M), np.full(N, per), max_iter=5000, tol=1e-9)
    assert np.abs(out.sum(1) - 1).max() < 1e-6
    assert np.abs(out.sum(0) - per).max() < 1e-6
    assert abs(out.sum() - M) < 1e-8


def test_sinkhorn_warns_without_convergence():
    K = np.array([[1.0, 1e-20], [1.0, 1.0]])
    with pytest.warns(ConvergenceWarning):
        out = sinkhorn_normalize(K, np.ones(2), np.ones(2), max_iter=2, tol=1e-12)
    assert np.isfinite(out).all()
    np.testing.assert_allclose(out.sum(0), 1, atol=1e-12)


def test_sinkhorn_floor_and_totals():
    out = sinkhorn_normalize(np.zeros((2, 2)), np.ones(2), np.ones(2))
    np.testing.assert_allclose(out, 0.5)
    with pytest.raises(ValueError):
        sinkhorn_normalize(np.ones((2, 2)), np.ones(2), np.ones(3))
