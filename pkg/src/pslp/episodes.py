"""Episode sampling (balanced and Dirichlet-imbalanced) and synthetic feature banks.

Every sampler takes a ``seed`` that is either an int or a sequence of ints;
it seeds ``numpy.random.default_rng`` (PCG64 through ``SeedSequence``). The
evaluator passes ``(base_seed, task_index)`` so each task is reproducible on
its own, whatever the worker layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IndivisibleQueryCount, InsufficientClasses, InsufficientSamples
from .features import FeatureBank

RNG_DESCRIPTION = "numpy.random.default_rng(SeedSequence([base_seed, task_index])) / PCG64"
MAX_DIRICHLET_ATTEMPTS = 10


@dataclass(frozen=True, eq=False)
class Episode:
    support_X: np.ndarray
    support_y: np.ndarray
    query_X: np.ndarray
    truth_y: np.ndarray
    n_way: int
    k_shot: int
    m_query: int
    seed: object
    mode: str
    classes: np.ndarray  # source-bank class id for each episode-local label
    support_idx: np.ndarray
    query_idx: np.ndarray

    @property
    def query_counts(self) -> np.ndarray:
        return np.bincount(self.truth_y, minlength=self.n_way)


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, (list, tuple)):
        seed = [int(s) for s in seed]
    return np.random.default_rng(seed)


def largest_remainder(proportions: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to ``total``, as close as possible to ``total * proportions``.

    Leftover units go to the largest fractional parts, lowest index first on ties.
    """
    raw = total * np.asarray(proportions, dtype=np.float64)
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _draw_classes(bank, n_way, rng):
    classes = np.asarray(bank.classes)
    if len(classes) < n_way:
        raise InsufficientClasses(f"bank has {len(classes)} classes, episode needs {n_way}")
    return rng.choice(classes, size=n_way, replace=False)


def _assemble(bank, classes, k_shot, counts, rng, *, seed, mode, m_query):
    s_idx, s_y, q_idx, q_y = [], [], [], []
    for local, cls in enumerate(classes):
        pool = bank.class_index[int(cls)]
        need = k_shot + int(counts[local])
        if len(pool) < need:
            raise InsufficientSamples(f"class {cls} has {len(pool)} samples, episode needs {need}")
        picked = rng.choice(pool, size=need, replace=False)
        s_idx.append(picked[:k_shot])
        q_idx.append(picked[k_shot:])
        s_y.append(np.full(k_shot, local))
        q_y.append(np.full(need - k_shot, local))
    s_idx = np.concatenate(s_idx)
    q_idx = np.concatenate(q_idx).astype(np.int64)
    q_y = np.concatenate(q_y).astype(np.int64)
    order = rng.permutation(len(q_idx))
    q_idx, q_y = q_idx[order], q_y[order]
    assert not np.intersect1d(s_idx, q_idx).size, "support and query overlap"
    return Episode(
        support_X=np.asarray(bank.features[s_idx], dtype=np.float64),
        support_y=np.concatenate(s_y).astype(np.int64),
        query_X=np.asarray(bank.features[q_idx], dtype=np.float64).reshape(len(q_idx), bank.d),
        truth_y=q_y,
        n_way=len(classes),
        k_shot=k_shot,
        m_query=m_query,
        seed=seed,
        mode=mode,
        classes=np.asarray(classes),
        support_idx=s_idx,
        query_idx=q_idx,
    )


def sample_balanced_episode(bank: FeatureBank, n_way: int, k_shot: int, m_query: int, seed) -> Episode:
    """``n_way`` classes, ``k_shot`` support and ``m_query / n_way`` queries per class."""
    if m_query % n_way:
        raise IndivisibleQueryCount(f"m_query={m_query} is not divisible by n_way={n_way}")
    rng = make_rng(seed)
    classes = _draw_classes(bank, n_way, rng)
    counts = np.full(n_way, m_query // n_way)
    return _assemble(bank, classes, k_shot, counts, rng, seed=seed, mode="balanced", m_query=m_query)


def sample_dirichlet_episode(bank: FeatureBank, n_way: int, k_shot: int, m_query: int, alpha_dir: float, seed) -> Episode:
    """Query counts follow ``m_query * Dirichlet(alpha_dir)`` rounded by largest remainder.

    If a drawn count exceeds what a class can supply, the proportions are
    redrawn, up to ten attempts.
    """
    if alpha_dir <= 0:
        raise ValueError(f"alpha_dir must be positive, got {alpha_dir}")
    rng = make_rng(seed)
    classes = _draw_classes(bank, n_way, rng)
    capacity = np.array([len(bank.class_index[int(c)]) for c in classes]) - k_shot
    for _ in range(MAX_DIRICHLET_ATTEMPTS):
        counts = dirichlet_counts(rng, n_way, m_query, alpha_dir)
        if (counts <= capacity).all():
            return _assemble(bank, classes, k_shot, counts, rng, seed=seed, mode="dirichlet", m_query=m_query)
    raise InsufficientSamples(
        f"no feasible query counts after {MAX_DIRICHLET_ATTEMPTS} Dirichlet draws (per-class capacity {capacity.tolist()})"
    )


def dirichlet_counts(rng: np.random.Generator, n_way: int, m_query: int, alpha_dir: float) -> np.ndarray:
    return largest_remainder(rng.dirichlet(np.full(n_way, float(alpha_dir))), m_query)


def sample_episode(bank: FeatureBank, n_way, k_shot, m_query, seed, mode="balanced", alpha_dir=2.0) -> Episode:
    if mode == "balanced":
        return sample_balanced_episode(bank, n_way, k_shot, m_query, seed)
    if mode == "dirichlet":
        return sample_dirichlet_episode(bank, n_way, k_shot, m_query, alpha_dir, seed)
    raise ValueError(f"unknown sampling mode {mode!r}")


def synthetic_gaussian_bank(n_classes: int, per_class: int, dim: int, separation: float, noise: float, seed) -> FeatureBank:
    """Isotropic Gaussian clusters around centers placed uniformly on a sphere of radius ``separation``.

    Features are stored as float32 so the bank survives an fbnk round trip unchanged.
    """
    rng = make_rng(seed)
    centers = rng.standard_normal((n_classes, dim))
    centers *= separation / np.linalg.norm(centers, axis=1, keepdims=True)
    labels = np.repeat(np.arange(n_classes), per_class)
    features = centers[labels] + noise * rng.standard_normal((n_classes * per_class, dim))
    return FeatureBank(features.astype(np.float32), labels)
