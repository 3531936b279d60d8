"""Prototype-based soft-label propagation for a single episode."""

from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import EmptyClass, PslpError
from .features import DEFAULT_PIPELINE, PreprocessPipeline, apply_pipeline
from .jmp import JmpConfig, concat_features, jmp_refine
from .propagation import (
    LabelMatrix,
    clamp_support,
    propagate,
    propagation_matrix,
    row_normalize_queries,
    sinkhorn_normalize,
)

BALANCED_DEFAULTS = {"alpha": 0.7, "beta": 0.6, "k": 4, "balanced": True}
IMBALANCED_DEFAULTS = {"alpha": 0.9, "beta": 0.2, "k": 1, "balanced": False}


@dataclass(frozen=True)
class PslpConfig:
    alpha: float = 0.7
    beta: float = 0.6
    gamma: float = 10.0
    k: int = 4
    B: int = 8
    t_pslp: int = 10
    balanced: bool = True
    raw_eq10: bool = False
    t_jmp: int = 1
    dense_first_graph: bool = False
    sinkhorn_iters: int = 30
    sinkhorn_tol: float = 1e-6
    pipeline: PreprocessPipeline = field(default=DEFAULT_PIPELINE)

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.t_pslp < 1:
            raise ValueError(f"t_pslp must be >= 1, got {self.t_pslp}")
        if self.sinkhorn_iters < 1 or self.sinkhorn_tol <= 0:
            raise ValueError("sinkhorn_iters must be >= 1 and sinkhorn_tol > 0")
        self.jmp  # validates k, B, gamma, t_jmp

    @classmethod
    def for_mode(cls, mode: str, **overrides) -> "PslpConfig":
        """Published defaults for ``"balanced"`` or ``"dirichlet"`` (imbalanced) episodes."""
        if mode == "balanced":
            base = BALANCED_DEFAULTS
        elif mode == "dirichlet":
            base = IMBALANCED_DEFAULTS
        else:
            raise ValueError(f"unknown mode {mode!r}")
        return cls(**{**base, **overrides})

    @property
    def jmp(self) -> JmpConfig:
        return JmpConfig(k=self.k, B=self.B, gamma=self.gamma, t_jmp=self.t_jmp, dense_first_graph=self.dense_first_graph)

    def replace(self, **changes) -> "PslpConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pipeline"] = str(self.pipeline)
        return d


@dataclass(frozen=True, eq=False)
class Prototypes:
    centers: np.ndarray
    iteration: int = 0


@dataclass(eq=False)
class EpisodeResult:
    predictions: np.ndarray
    soft_labels: np.ndarray
    prototype_trace: list
    wall_time: float  # microseconds
    center_shift: list = field(default_factory=list)


def init_prototypes(X: np.ndarray, y_s: np.ndarray, n_classes: int | None = None) -> Prototypes:
    """Class means of the support rows (the first ``len(y_s)`` rows of ``X``)."""
    y_s = np.asarray(y_s)
    n_classes = int(y_s.max()) + 1 if n_classes is None else n_classes
    support = np.asarray(X, dtype=np.float64)[: y_s.size]
    centers = np.empty((n_classes, support.shape[1]))
    for n in range(n_classes):
        members = support[y_s == n]
        if len(members) == 0:
            raise EmptyClass(f"class {n} has no support samples")
        centers[n] = members.mean(axis=0)
    return Prototypes(centers, 0)


def soft_labels(Xq: np.ndarray, C: Prototypes, gamma: float) -> np.ndarray:
    """Softmax of ``-gamma * ||x_q - c_n||^2`` over classes."""
    Xq = np.asarray(Xq, dtype=np.float64)
    if Xq.shape[0] == 0:
        return np.zeros((0, C.centers.shape[0]))
    logits = -gamma * _sq_dist_to(Xq, C.centers)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


def _sq_dist_to(X, C):
    D = (X * X).sum(axis=1)[:, None] + (C * C).sum(axis=1)[None, :] - 2.0 * (X @ C.T)
    return np.maximum(D, 0.0)


def rectify_prototypes(C: Prototypes, Z: LabelMatrix, X: np.ndarray, beta: float, raw: bool = False) -> Prototypes:
    """Blend each center towards the label-weighted mean of all samples.

    With ``raw`` the target is the unnormalised ``Z.T @ X``. A class with no
    label mass keeps its current center as target.
    """
    weighted = Z.values.T @ np.asarray(X, dtype=np.float64)
    if raw:
        target = weighted
    else:
        mass = Z.values.sum(axis=0)
        target = C.centers.copy()
        live = mass > 0
        target[live] = weighted[live] / mass[live, None]
    return Prototypes((1.0 - beta) * C.centers + beta * target, C.iteration + 1)


def predict(Zq: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index."""
    Zq = np.asarray(Zq)
    if Zq.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return np.argmax(Zq, axis=1).astype(np.int64)


def preprocess_episode(support_X, query_X, pipeline: PreprocessPipeline):
    """Fit ``pipeline`` on support and query jointly; return the two transformed blocks."""
    support_X = np.asarray(support_X, dtype=np.float64)
    X = concat_features(support_X, query_X)
    X = apply_pipeline(X, pipeline, clamp_pca=True)
    nk = support_X.shape[0]
    return X[:nk], X[nk:]


def normalize_labels(Z: LabelMatrix, y_s, cfg: PslpConfig) -> LabelMatrix:
    """Clamp support rows, then row-normalise (or Sinkhorn-balance) query rows."""
    Z = clamp_support(Z, y_s)
    m, n_cls = Z.m, Z.values.shape[1]
    if cfg.balanced and m > 0:
        values = Z.values.copy()
        values[Z.nk :] = sinkhorn_normalize(
            values[Z.nk :], np.ones(m), np.full(n_cls, m / n_cls), cfg.sinkhorn_iters, cfg.sinkhorn_tol
        )
        return Z.with_values(values)
    return row_normalize_queries(Z)


def _effective_neighbors(B, T):
    if T < 2:
        raise PslpError(f"an episode needs at least two samples, got {T}")
    if B >= T:
        warnings.warn(f"B={B} clamped to {T - 1} for an episode of {T} samples", stacklevel=3)
        return T - 1
    return B


def pslp_infer(support_X, y_s, query_X, cfg: PslpConfig, n_classes: int | None = None, seed=None) -> EpisodeResult:
    """Classify ``query_X`` given labelled ``support_X``.

    Support and query are preprocessed together, refined by joint message
    passing, then ``cfg.t_pslp`` rounds of soft-label generation, propagation,
    normalisation and prototype rectification are run. ``seed`` is only used to
    tag errors.
    """
    start = time.perf_counter()
    try:
        y_s = np.asarray(y_s, dtype=np.int64)
        n_classes = int(y_s.max()) + 1 if n_classes is None else n_classes
        Xs, Xq = preprocess_episode(support_X, query_X, cfg.pipeline)
        X0 = concat_features(Xs, Xq)
        nk, T = Xs.shape[0], X0.shape[0]
        jcfg = replace(cfg.jmp, B=_effective_neighbors(cfg.B, T))
        X, graph = jmp_refine(X0, jcfg)
        C = init_prototypes(X, y_s, n_classes)
        P = propagation_matrix(graph.normalized, cfg.alpha)

        trace = [C]
        shifts = []
        Z = None
        for _ in range(cfg.t_pslp):
            values = np.vstack([np.zeros((nk, n_classes)), soft_labels(X[nk:], C, cfg.gamma)])
            Z = clamp_support(LabelMatrix(values, nk), y_s)
            Z = normalize_labels(propagate(P, Z), y_s, cfg)
            C_next = rectify_prototypes(C, Z, X, cfg.beta, raw=cfg.raw_eq10)
            shifts.append(float(np.linalg.norm(C_next.centers - C.centers)))
            C = C_next
            trace.append(C)
        Zq = Z.query.copy()
    except PslpError as exc:
        if exc.seed is None:
            exc.seed = seed
        raise
    elapsed = (time.perf_counter() - start) * 1e6
    return EpisodeResult(predictions=predict(Zq), soft_labels=Zq, prototype_trace=trace, wall_time=elapsed, center_shift=shifts)


def nearest_prototype_predict(support_X, y_s, query_X, gamma: float, pipeline: PreprocessPipeline, n_classes: int | None = None):
    """Support-mean prototypes plus Gaussian-softmax argmax; no graph, no propagation."""
    y_s = np.asarray(y_s, dtype=np.int64)
    n_classes = int(y_s.max()) + 1 if n_classes is None else n_classes
    Xs, Xq = preprocess_episode(support_X, query_X, pipeline)
    C = init_prototypes(Xs, y_s, n_classes)
    return predict(soft_labels(Xq, C, gamma))


def vanilla_lp_predict(support_X, y_s, query_X, cfg: PslpConfig, n_classes: int | None = None):
    """One closed-form propagation seeded only by the one-hot support labels."""
    y_s = np.asarray(y_s, dtype=np.int64)
    n_classes = int(y_s.max()) + 1 if n_classes is None else n_classes
    Xs, Xq = preprocess_episode(support_X, query_X, cfg.pipeline)
    X0 = concat_features(Xs, Xq)
    nk, T = Xs.shape[0], X0.shape[0]
    _, graph = jmp_refine(X0, replace(cfg.jmp, B=_effective_neighbors(cfg.B, T)))
    P = propagation_matrix(graph.normalized, cfg.alpha)
    Z = clamp_support(LabelMatrix(np.zeros((T, n_classes)), nk), y_s)
    return predict(propagate(P, Z).query)


__all__ = [
    "PslpConfig",
    "Prototypes",
    "EpisodeResult",
    "init_prototypes",
    "soft_labels",
    "rectify_prototypes",
    "predict",
    "pslp_infer",
    "nearest_prototype_predict",
    "vanilla_lp_predict",
]
