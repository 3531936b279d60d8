"""Built-in oracle and invariant checks, runnable without pytest (``pslp selftest``)."""

from __future__ import annotations

import contextlib
import warnings

import numpy as np

from . import propagation
from .episodes import synthetic_gaussian_bank
from .errors import BadAlpha
from .evaluate import EpisodeParams, baseline_nearest_prototype
from .graph import build_graph
from .model import PslpConfig, pslp_infer
from .propagation import LabelMatrix, iterative_oracle, propagate, propagation_matrix, sinkhorn_normalize

ALPHAS = (0.0, 0.5, 0.7, 0.9)


def random_instance(rng: np.random.Generator, T: int, N: int, alpha: float, d: int = 6):
    """A valid propagation problem: a B-NN graph over random points and a non-negative label matrix."""
    X = rng.standard_normal((T, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    B = int(rng.integers(1, min(8, T - 1) + 1))
    graph = build_graph(X, gamma=float(rng.uniform(1.0, 10.0)), B=B)
    nk = int(rng.integers(1, T))
    Z = rng.random((T, N))
    return graph.normalized, alpha, LabelMatrix(Z, nk)


def check_closed_form(quick: bool, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    n, t_max = (40, 30) if quick else (200, 100)
    worst = 0.0
    for i in range(n):
        T = int(rng.integers(10, t_max + 1))
        N = int(rng.integers(2, 11))
        L, alpha, Z = random_instance(rng, T, N, ALPHAS[i % len(ALPHAS)])
        closed = propagate(propagation_matrix(L, alpha), Z).values
        oracle = iterative_oracle(L, alpha, Z, tol=1e-13).values
        worst = max(worst, float(np.abs(closed - oracle).max()))
    return worst <= 1e-8, f"{n} instances, max |closed - neumann| = {worst:.2e}"


def check_sinkhorn(quick: bool, seed: int = 1) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    n = 20 if quick else 100
    worst = 0.0
    for _ in range(n):
        N = int(rng.integers(2, 8))
        M = N * int(rng.integers(1, 6))
        K = rng.random((M, N)) + 0.01
        out = sinkhorn_normalize(K, np.ones(M), np.full(N, M / N), max_iter=2000, tol=1e-9)
        worst = max(worst, np.abs(out.sum(1) - 1).max(), np.abs(out.sum(0) - M / N).max())
    return worst <= 1e-6, f"{n} matrices, worst marginal violation {worst:.2e}"


def check_eigen_bound(quick: bool, seed: int = 2) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    n, t_max = (20, 30) if quick else (60, 64)
    worst = 0.0
    for _ in range(n):
        T = int(rng.integers(3, t_max + 1))
        L, *_ = random_instance(rng, T, 2, 0.5)
        worst = max(worst, float(np.abs(np.linalg.eigvalsh(L)).max()))
    return worst <= 1 + 1e-9, f"{n} graphs, spectral radius max {worst:.12f}"


def check_reduction(quick: bool, seed: int = 3) -> tuple[bool, str]:
    n = 20 if quick else 200
    bank = synthetic_gaussian_bank(10, 40, 16, 3.0, 1.0, seed)
    params = EpisodeParams(n_way=5, k_shot=1, m_query=15 if quick else 75, seed=seed)
    cfg = PslpConfig(alpha=0.0, k=0, t_pslp=1, balanced=False)
    mismatched = 0
    for i in range(n):
        ep = params.sample(bank, i)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            full = pslp_infer(ep.support_X, ep.support_y, ep.query_X, cfg, ep.n_way).predictions
            base = baseline_nearest_prototype(ep, cfg.gamma, cfg.pipeline)
        mismatched += int((full != base).any())
    return mismatched == 0, f"{n} episodes, {mismatched} with differing predictions"


def check_alpha_guard(quick: bool) -> tuple[bool, str]:
    L = np.array([[0.0, 1.0], [1.0, 0.0]])
    for bad in (1.0, 1.5, -0.1):
        try:
            propagation_matrix(L, bad)
        except BadAlpha:
            continue
        return False, f"alpha={bad} was accepted"
    for good in ALPHAS:
        propagation_matrix(L, good)
    return True, "alpha outside [0, 1) rejected, inside accepted"


SUITES = {
    "closed_form_vs_neumann": check_closed_form,
    "sinkhorn_marginals": check_sinkhorn,
    "eigenvalue_bound": check_eigen_bound,
    "reduction_equivalence": check_reduction,
    "alpha_guard": check_alpha_guard,
}


@contextlib.contextmanager
def inverted_alpha_guard():
    """Test hook: accept exactly the alphas the real guard rejects."""
    original = propagation.check_alpha

    def flipped(alpha):
        if 0.0 <= alpha < 1.0:
            raise BadAlpha(f"alpha={alpha} rejected by inverted guard")

    propagation.check_alpha = flipped
    try:
        yield
    finally:
        propagation.check_alpha = original


def run_selftest(quick: bool = False, fault: str | None = None, out=print) -> bool:
    guard = inverted_alpha_guard() if fault == "alpha-guard" else contextlib.nullcontext()
    all_ok = True
    with guard:
        for name, fn in SUITES.items():
            try:
                ok, detail = fn(quick)
            except Exception as exc:  # a crashing suite is a failing suite
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            all_ok &= ok
            out(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all_ok
