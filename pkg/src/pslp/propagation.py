"""Closed-form label propagation and label-matrix normalisation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import BadAlpha, ConvergenceWarning, DimensionMismatch, LabelOutOfRange, NoConvergence, SingularSystem

PIVOT_FLOOR = 1e-12
SINKHORN_FLOOR = 1e-30


@dataclass(eq=False)
class LabelMatrix:
    """``T x N`` label matrix; the first ``nk`` rows belong to support samples."""

    values: np.ndarray
    nk: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or not 0 <= self.nk <= self.values.shape[0]:
            raise DimensionMismatch(f"bad label matrix shape {self.values.shape} with nk={self.nk}")

    @property
    def m(self) -> int:
        return self.values.shape[0] - self.nk

    @property
    def support(self) -> np.ndarray:
        return self.values[: self.nk]

    @property
    def query(self) -> np.ndarray:
        return self.values[self.nk :]

    def with_values(self, values) -> "LabelMatrix":
        return LabelMatrix(values, self.nk)


@dataclass(frozen=True, eq=False)
class PropagationMatrix:
    values: np.ndarray
    alpha: float


def check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha < 1.0:
        raise BadAlpha(f"alpha={alpha} outside [0, 1)")


def propagation_matrix(L: np.ndarray, alpha: float) -> PropagationMatrix:
    """Invert ``I - alpha * L`` through a pivoted LU factorisation."""
    check_alpha(alpha)
    T = L.shape[0]
    system = np.eye(T) - alpha * L
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularSystem
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(system, check_finite=True)
    if np.abs(np.diag(lu)).min(initial=np.inf) < PIVOT_FLOOR:
        raise SingularSystem(f"pivot below {PIVOT_FLOOR} while factoring I - {alpha} L")
    P = scipy.linalg.lu_solve((lu, piv), np.eye(T))
    return PropagationMatrix(values=0.5 * (P + P.T), alpha=alpha)


def propagate(P: PropagationMatrix, Z: LabelMatrix) -> LabelMatrix:
    """``P @ Z`` with round-off negatives clamped to zero."""
    if P.values.shape[1] != Z.values.shape[0]:
        raise DimensionMismatch(f"P is {P.values.shape}, Z is {Z.values.shape}")
    return Z.with_values(np.maximum(P.values @ Z.values, 0.0))


def iterative_oracle(L: np.ndarray, alpha: float, Z: LabelMatrix, tol: float = 1e-12, max_iter: int = 100_000) -> LabelMatrix:
    """Fixed-point iteration ``Y <- alpha L Y + Z``; its limit is ``(I - alpha L)^-1 Z``."""
    if alpha >= 1.0:
        raise BadAlpha(f"alpha={alpha} must be < 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    Z0 = Z.values
    Y = Z0.copy()
    for _ in range(max_iter):
        nxt = alpha * (L @ Y) + Z0
        delta = np.linalg.norm(nxt - Y)
        Y = nxt
        if delta < tol:
            return Z.with_values(Y)
    raise NoConvergence(f"Neumann iteration still moving by {delta:.3e} after {max_iter} steps")


def row_normalize_queries(Z: LabelMatrix) -> LabelMatrix:
    """Scale query rows to sum to one; all-zero rows become uniform."""
    values = Z.values.copy()
    q = values[Z.nk :]
    n_cls = values.shape[1]
    sums = q.sum(axis=1, keepdims=True)
    empty = sums[:, 0] <= 0
    q[~empty] = q[~empty] / sums[~empty]
    q[empty] = 1.0 / n_cls
    return Z.with_values(values)


def one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    y = np.asarray(y)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise LabelOutOfRange(f"labels must lie in [0, {n_classes}), got range [{y.min()}, {y.max()}]")
    out = np.zeros((y.size, n_classes))
    out[np.arange(y.size), y] = 1.0
    return out


def clamp_support(Z: LabelMatrix, y_s: np.ndarray) -> LabelMatrix:
    """Overwrite the support rows with one-hot encodings of ``y_s``."""
    y_s = np.asarray(y_s)
    if y_s.shape != (Z.nk,):
        raise DimensionMismatch(f"{y_s.size} support labels for {Z.nk} support rows")
    values = Z.values.copy()
    values[: Z.nk] = one_hot(y_s, values.shape[1])
    return Z.with_values(values)


def sinkhorn_normalize(
    Zq: np.ndarray,
    row_marginals: np.ndarray,
    col_marginals: np.ndarray,
    max_iter: int = 30,
    tol: float = 1e-6,
) -> np.ndarray:
    """Scale a positive matrix towards the given row and column sums.

    Each sweep rescales rows, then columns, so column sums are exact on
    return. Stops once the largest marginal violation drops below ``tol``; if
    ``max_iter`` sweeps are not enough, the last iterate is returned with a
    :class:`ConvergenceWarning`.
    """
    r = np.asarray(row_marginals, dtype=np.float64)
    c = np.asarray(col_marginals, dtype=np.float64)
    if abs(r.sum() - c.sum()) > 1e-9 * max(1.0, abs(r.sum())):
        raise ValueError(f"marginal totals differ: rows {r.sum()} vs columns {c.sum()}")
    K = np.maximum(np.asarray(Zq, dtype=np.float64), SINKHORN_FLOOR)
    if K.size == 0:
        return K
    if max(np.abs(K.sum(axis=1) - r).max(), np.abs(K.sum(axis=0) - c).max()) < tol:
        return K
    # iterate on the scalings u, v of diag(u) K diag(v); after each sweep the
    # columns are exact, so only the rows need checking
    Kv = K.sum(axis=1)
    for _ in range(max_iter):
        u = r / Kv
        v = c / (K.T @ u)
        Kv = K @ v
        if np.abs(u * Kv - r).max() < tol:
            break
    else:
        warnings.warn("Sinkhorn scaling hit max_iter before reaching tol", ConvergenceWarning, stacklevel=2)
    out = u[:, None] * K * v[None, :]
    # make the column sums exact rather than exact up to the scaling round-off
    return out * (c / out.sum(axis=0))[None, :]
