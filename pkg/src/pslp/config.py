"""Run configuration: defaults, then a ``key = value`` file, then command-line flags.

Choosing ``ep.mode = dirichlet`` swaps in the imbalanced hyperparameter set
(alpha, beta, k, Sinkhorn off) for every one of those keys not set explicitly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .evaluate import EpisodeParams
from .features import PreprocessPipeline
from .model import BALANCED_DEFAULTS, IMBALANCED_DEFAULTS, PslpConfig

ENV_VAR = "PSLP_CONFIG"


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _pipeline(text):
    return str(PreprocessPipeline.parse(str(text)))


KEYS = {
    "pslp.alpha": float,
    "pslp.beta": float,
    "pslp.gamma": float,
    "pslp.k": int,
    "pslp.b": int,
    "pslp.t_pslp": int,
    "pslp.balanced": _bool,
    "pslp.raw_eq10": _bool,
    "jmp.t_jmp": int,
    "jmp.dense_first_graph": _bool,
    "prop.sinkhorn_iters": int,
    "prop.sinkhorn_tol": float,
    "features.pipeline": _pipeline,
    "ep.n_way": int,
    "ep.k_shot": int,
    "ep.m_query": int,
    "ep.mode": str,
    "ep.alpha_dir": float,
    "ep.seed": int,
    "run.workers": int,
}

ALIASES = {
    "prop.alpha": "pslp.alpha",
    "prop.sinkhorn": "pslp.balanced",
    "jmp.k": "pslp.k",
    "jmp.b": "pslp.b",
    "jmp.gamma": "pslp.gamma",
}

_MODE_KEYS = {"alpha": "pslp.alpha", "beta": "pslp.beta", "k": "pslp.k", "balanced": "pslp.balanced"}

_BASE = {
    "pslp.gamma": 10.0,
    "pslp.b": 8,
    "pslp.t_pslp": 10,
    "pslp.raw_eq10": False,
    "jmp.t_jmp": 1,
    "jmp.dense_first_graph": False,
    "prop.sinkhorn_iters": 30,
    "prop.sinkhorn_tol": 1e-6,
    "features.pipeline": "center,l2_normalize,pca(40),l2_normalize",
    "ep.n_way": 5,
    "ep.k_shot": 1,
    "ep.m_query": 75,
    "ep.mode": "balanced",
    "ep.alpha_dir": 2.0,
    "ep.seed": 0,
    "run.workers": 1,
}


def canonical(key: str) -> str:
    key = key.strip().lower().replace("-", "_")
    key = ALIASES.get(key, key)
    if key not in KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    return key


def coerce(values: dict) -> dict:
    out = {}
    for key, raw in values.items():
        key = canonical(key)
        try:
            out[key] = KEYS[key](raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    if "ep.mode" in out and out["ep.mode"] not in ("balanced", "dirichlet"):
        raise ConfigError(f"ep.mode must be balanced or dirichlet, got {out['ep.mode']!r}")
    return out


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return coerce(values)


@dataclass(frozen=True)
class RunConfig:
    values: dict

    @classmethod
    def resolve(cls, file_values: dict | None = None, flag_values: dict | None = None) -> "RunConfig":
        explicit = {**coerce(file_values or {}), **coerce(flag_values or {})}
        mode = explicit.get("ep.mode", _BASE["ep.mode"])
        mode_defaults = BALANCED_DEFAULTS if mode == "balanced" else IMBALANCED_DEFAULTS
        values = dict(_BASE)
        values.update({_MODE_KEYS[k]: v for k, v in mode_defaults.items()})
        values.update(explicit)
        rc = cls(dict(sorted(values.items())))
        rc.pslp_config()  # fail early on invalid combinations
        return rc

    @classmethod
    def load(cls, config_path=None, flag_values: dict | None = None) -> "RunConfig":
        path = config_path or os.environ.get(ENV_VAR)
        file_values = read_config_file(path) if path else {}
        return cls.resolve(file_values, flag_values)

    def pslp_config(self) -> PslpConfig:
        v = self.values
        try:
            return PslpConfig(
                alpha=v["pslp.alpha"],
                beta=v["pslp.beta"],
                gamma=v["pslp.gamma"],
                k=v["pslp.k"],
                B=v["pslp.b"],
                t_pslp=v["pslp.t_pslp"],
                balanced=v["pslp.balanced"],
                raw_eq10=v["pslp.raw_eq10"],
                t_jmp=v["jmp.t_jmp"],
                dense_first_graph=v["jmp.dense_first_graph"],
                sinkhorn_iters=v["prop.sinkhorn_iters"],
                sinkhorn_tol=v["prop.sinkhorn_tol"],
                pipeline=PreprocessPipeline.parse(v["features.pipeline"]),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def episode_params(self) -> EpisodeParams:
        v = self.values
        return EpisodeParams(
            n_way=v["ep.n_way"],
            k_shot=v["ep.k_shot"],
            m_query=v["ep.m_query"],
            mode=v["ep.mode"],
            alpha_dir=v["ep.alpha_dir"],
            seed=v["ep.seed"],
        )

    @property
    def workers(self) -> int:
        return self.values["run.workers"]

    def echo(self) -> dict:
        """Resolved values, minus worker count (which never changes results)."""
        return {k: v for k, v in self.values.items() if k != "run.workers"}
