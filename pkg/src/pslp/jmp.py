"""Joint message passing: alternate low-pass feature smoothing and kNN graph rebuilding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .graph import QSGraph, build_graph, dense_graph


@dataclass(frozen=True)
class JmpConfig:
    k: int = 4
    B: int = 8
    gamma: float = 10.0
    t_jmp: int = 1
    dense_first_graph: bool = False

    def __post_init__(self):
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.t_jmp < 1:
            raise ValueError(f"t_jmp must be >= 1, got {self.t_jmp}")


def concat_features(support: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Stack support rows above query rows."""
    support = np.asarray(support, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    if query.size == 0:
        query = query.reshape(0, support.shape[1])
    if support.ndim != 2 or query.ndim != 2 or support.shape[1] != query.shape[1]:
        raise DimensionMismatch(f"cannot stack support {support.shape} and query {query.shape}")
    return np.vstack([support, query])


def filter_power(L: np.ndarray, k: int, X: np.ndarray) -> np.ndarray:
    """Apply ``((I + L) / 2)^k`` to ``X`` as ``k`` successive averaging steps."""
    X = np.array(X, dtype=np.float64)
    for _ in range(k):
        X = 0.5 * (X + L @ X)
    return X


def jmp_refine(X0: np.ndarray, cfg: JmpConfig) -> tuple[np.ndarray, QSGraph]:
    """Smooth features over the graph, then rebuild the B-NN graph from the result.

    Returns the refined features and the last graph, which is the one label
    propagation runs on.
    """
    X = np.asarray(X0, dtype=np.float64)
    if cfg.dense_first_graph:
        graph = dense_graph(X, cfg.gamma)
    else:
        graph = build_graph(X, cfg.gamma, cfg.B)
    for _ in range(cfg.t_jmp):
        X = filter_power(graph.normalized, cfg.k, X)
        graph = build_graph(X, cfg.gamma, cfg.B)
    return X, graph
