"""Multi-episode evaluation, ablation baselines and latency benchmarking."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .episodes import RNG_DESCRIPTION, Episode, sample_episode
from .errors import PslpError
from .features import FeatureBank, PreprocessPipeline
from .model import PslpConfig, nearest_prototype_predict, pslp_infer, vanilla_lp_predict

CI_CONVENTION = "ci95 = 1.96 * population std of per-task accuracy / sqrt(n_tasks)"


@dataclass(frozen=True)
class EpisodeParams:
    n_way: int = 5
    k_shot: int = 1
    m_query: int = 75
    mode: str = "balanced"
    alpha_dir: float = 2.0
    seed: int = 0

    def task_seed(self, task_index: int) -> tuple[int, int]:
        return (self.seed, task_index)

    def sample(self, bank: FeatureBank, task_index: int) -> Episode:
        return sample_episode(
            bank, self.n_way, self.k_shot, self.m_query, self.task_seed(task_index), self.mode, self.alpha_dir
        )


def baseline_nearest_prototype(episode: Episode, gamma: float, preprocess: PreprocessPipeline) -> np.ndarray:
    return nearest_prototype_predict(
        episode.support_X, episode.support_y, episode.query_X, gamma, preprocess, episode.n_way
    )


def baseline_vanilla_lp(episode: Episode, cfg: PslpConfig) -> np.ndarray:
    return vanilla_lp_predict(episode.support_X, episode.support_y, episode.query_X, cfg, episode.n_way)


def _run_pslp(ep, cfg):
    return pslp_infer(ep.support_X, ep.support_y, ep.query_X, cfg, ep.n_way, seed=ep.seed).predictions


def _run_pslp_no_jmp(ep, cfg):
    return _run_pslp(ep, cfg.replace(k=0))


def _run_nearest_prototype(ep, cfg):
    return baseline_nearest_prototype(ep, cfg.gamma, cfg.pipeline)


def _run_oracle(ep, cfg):
    return ep.truth_y.copy()


METHODS = {
    "pslp": _run_pslp,
    "pslp_no_jmp": _run_pslp_no_jmp,
    "vanilla_lp": baseline_vanilla_lp,
    "nearest_prototype": _run_nearest_prototype,
    "oracle": _run_oracle,
}


def accuracy(predictions, truth) -> float:
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if truth.size == 0:
        raise ValueError("cannot score an episode without queries")
    return float(np.count_nonzero(predictions == truth)) / truth.size


def latency_summary(micros) -> dict:
    micros = np.asarray(micros, dtype=np.float64)
    if micros.size == 0:
        return {"n": 0, "total_s": 0.0, "mean": None, "p50": None, "p95": None}
    return {
        "n": int(micros.size),
        "total_s": float(micros.sum() / 1e6),
        "mean": float(micros.mean()),
        "p50": float(np.percentile(micros, 50)),
        "p95": float(np.percentile(micros, 95)),
    }


def aggregate(accuracies) -> tuple[float, float]:
    """Mean accuracy and 95% half-width, population standard deviation."""
    a = np.asarray(accuracies, dtype=np.float64)
    if a.size == 0:
        return float("nan"), float("nan")
    return float(a.mean()), float(1.96 * a.std() / math.sqrt(a.size))


@dataclass
class TaskRecord:
    task_index: int
    seed: tuple
    accuracy: dict = field(default_factory=dict)
    micros: dict = field(default_factory=dict)
    error: str | None = None


@dataclass
class BenchReport:
    n_tasks: int
    mean_accuracy: float
    ci95: float
    per_task_micros: dict
    config_echo: dict
    per_method: dict
    n_failed: int = 0
    tasks: list = field(default_factory=list, repr=False)

    def numeric_fields(self) -> dict:
        """Everything except timings; identical for identical seeds."""
        return {
            "n_tasks": self.n_tasks,
            "n_failed": self.n_failed,
            "mean_accuracy": self.mean_accuracy,
            "ci95": self.ci95,
            "per_method": {m: {"mean_accuracy": v["mean_accuracy"], "ci95": v["ci95"]} for m, v in self.per_method.items()},
            "per_task_accuracy": [[t.accuracy.get(m) for m in self.per_method] for t in self.tasks],
        }

    def to_dict(self) -> dict:
        return {
            "schema": "pslp.bench_report/1",
            "ci_convention": CI_CONVENTION,
            "rng": RNG_DESCRIPTION,
            "n_tasks": self.n_tasks,
            "n_failed": self.n_failed,
            "mean_accuracy": self.mean_accuracy,
            "ci95": self.ci95,
            "per_task_micros": self.per_task_micros,
            "per_method": self.per_method,
            "config_echo": self.config_echo,
        }

    def table(self) -> str:
        lines = [
            f"# {self.n_tasks} tasks, {self.n_failed} failed; {CI_CONVENTION}",
            f"{'method':<20} {'accuracy %':>11} {'+/- ci95':>9} {'mean us':>10} {'p95 us':>10}",
        ]
        for name, res in self.per_method.items():
            lat = res["per_task_micros"]
            mean_us = f"{lat['mean']:10.0f}" if lat["mean"] is not None else f"{'-':>10}"
            p95_us = f"{lat['p95']:10.0f}" if lat["p95"] is not None else f"{'-':>10}"
            lines.append(f"{name:<20} {100 * res['mean_accuracy']:11.2f} {100 * res['ci95']:9.2f} {mean_us} {p95_us}")
        return "\n".join(lines)

    def write_task_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task_index", "seed", "method", "accuracy", "micros"])
            for t in self.tasks:
                for m in self.per_method:
                    w.writerow([t.task_index, f"{t.seed[0]}:{t.seed[1]}", m, t.accuracy.get(m, ""), t.micros.get(m, "")])


_WORKER_STATE = {}


def _init_worker(bank, cfg, params, methods):
    _WORKER_STATE.update(bank=bank, cfg=cfg, params=params, methods=methods)


def _run_task(task_index: int, skip_errors: bool = False) -> TaskRecord:
    st = _WORKER_STATE
    params, cfg = st["params"], st["cfg"]
    rec = TaskRecord(task_index=task_index, seed=params.task_seed(task_index))
    try:
        ep = params.sample(st["bank"], task_index)
        for name in st["methods"]:
            fn = METHODS[name]
            t0 = time.perf_counter()
            pred = fn(ep, cfg)
            rec.micros[name] = (time.perf_counter() - t0) * 1e6
            rec.accuracy[name] = accuracy(pred, ep.truth_y)
    except PslpError as exc:
        if exc.seed is None:
            exc.seed = rec.seed
        if not skip_errors:
            raise
        rec.error = f"{type(exc).__name__}: {exc}"
        rec.accuracy.clear()
        rec.micros.clear()
    return rec


def evaluate(
    bank: FeatureBank,
    cfg: PslpConfig,
    params: EpisodeParams,
    n_tasks: int,
    methods=("pslp",),
    workers: int = 1,
    skip_errors: bool = False,
    extra_echo: dict | None = None,
) -> BenchReport:
    """Score ``methods`` on ``n_tasks`` seeded episodes.

    Task ``i`` is always sampled from seed ``(params.seed, i)`` and results are
    reduced in task order, so the report does not depend on ``workers``. The
    first method supplies the top-level accuracy fields.
    """
    methods = tuple(methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; choose from {sorted(METHODS)}")
    if n_tasks < 1:
        raise ValueError("n_tasks must be positive")
    if workers <= 1:
        _init_worker(bank, cfg, params, methods)
        records = [_run_task(i, skip_errors) for i in range(n_tasks)]
    else:
        chunk = max(1, n_tasks // (workers * 4))
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(bank, cfg, params, methods)) as pool:
            records = list(pool.map(_run_task, range(n_tasks), [skip_errors] * n_tasks, chunksize=chunk))
    records.sort(key=lambda r: r.task_index)
    ok = [r for r in records if r.error is None]

    per_method = {}
    for name in methods:
        mean, ci = aggregate([r.accuracy[name] for r in ok])
        per_method[name] = {
            "mean_accuracy": mean,
            "ci95": ci,
            "per_task_micros": latency_summary([r.micros[name] for r in ok]),
        }
    echo = {"pslp": cfg.to_dict(), "episode": asdict(params), "n_tasks": n_tasks, "methods": list(methods)}
    if extra_echo:
        echo.update(extra_echo)
    head = per_method[methods[0]]
    return BenchReport(
        n_tasks=len(ok),
        mean_accuracy=head["mean_accuracy"],
        ci95=head["ci95"],
        per_task_micros=head["per_task_micros"],
        config_echo=echo,
        per_method=per_method,
        n_failed=len(records) - len(ok),
        tasks=records,
    )


def bench_latency(bank: FeatureBank, cfg: PslpConfig, params: EpisodeParams, n_tasks: int) -> dict:
    """Time :func:`pslp_infer` alone on pre-sampled episodes, single process."""
    episodes = [params.sample(bank, i) for i in range(n_tasks)]
    micros = []
    for ep in episodes:
        t0 = time.perf_counter()
        pslp_infer(ep.support_X, ep.support_y, ep.query_X, cfg, ep.n_way, seed=ep.seed)
        micros.append((time.perf_counter() - t0) * 1e6)
    return latency_summary(micros)
