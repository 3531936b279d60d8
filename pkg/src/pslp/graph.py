"""Query-support graph construction.

All matrices are dense; episodes have at most a few hundred nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadNeighborCount

DEGREE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class QSGraph:
    affinity: np.ndarray
    normalized: np.ndarray
    degrees: np.ndarray

    @property
    def T(self) -> int:
        return self.affinity.shape[0]


def pairwise_sq_dist(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    sq = np.einsum("ij,ij->i", X, X)
    D = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    np.maximum(D, 0.0, out=D)
    return D


def gaussian_affinity(X: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * ||x_i - x_j||^2); the diagonal is 1 here and only removed by sparsification."""
    return np.exp(-gamma * pairwise_sq_dist(X))


def knn_sparsify(A: np.ndarray, B: int) -> np.ndarray:
    """Keep the ``B`` largest off-diagonal entries of each row.

    Ties at the cut are resolved towards the lower column index. The result is
    generally asymmetric; see :func:`symmetrize_max`.
    """
    A = np.asarray(A, dtype=np.float64)
    T = A.shape[0]
    if B < 1 or B >= T:
        raise BadNeighborCount(f"B={B} must satisfy 1 <= B < T={T}")
    ranked = A.copy()
    np.fill_diagonal(ranked, -np.inf)
    keep = np.argsort(-ranked, axis=1, kind="stable")[:, :B]
    rows = np.arange(T)[:, None]
    out = np.zeros_like(A)
    out[rows, keep] = A[rows, keep]
    return out


def symmetrize_max(A: np.ndarray) -> np.ndarray:
    return np.maximum(A, A.T)


def normalized_adjacency(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(D^-1/2 A D^-1/2, degrees)`` with degrees floored at ``DEGREE_FLOOR``."""
    degrees = np.maximum(A.sum(axis=1), DEGREE_FLOOR)
    inv_sqrt = 1.0 / np.sqrt(degrees)
    L = inv_sqrt[:, None] * A * inv_sqrt[None, :]
    return 0.5 * (L + L.T), degrees


def graph_from_affinity(A: np.ndarray) -> QSGraph:
    L, degrees = normalized_adjacency(A)
    return QSGraph(affinity=A, normalized=L, degrees=degrees)


def build_graph(X: np.ndarray, gamma: float, B: int) -> QSGraph:
    A = symmetrize_max(knn_sparsify(gaussian_affinity(X, gamma), B))
    return graph_from_affinity(A)


def dense_graph(X: np.ndarray, gamma: float) -> QSGraph:
    """Fully connected Gaussian graph without self-loops."""
    A = gaussian_affinity(X, gamma)
    np.fill_diagonal(A, 0.0)
    return graph_from_affinity(A)
