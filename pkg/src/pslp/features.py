"""Feature banks, their on-disk formats, and per-episode preprocessing.

Two file formats are supported:

* ``fbnk``: little-endian binary. Magic ``b"FBNK"``, u32 version (1), u32 n,
  u32 d, then ``n*d`` float32 values row-major, then ``n`` u32 labels.
* ``csv``: one sample per line, integer label first, then ``d`` floats.
  No header.
"""

from __future__ import annotations

import csv
import io
import re
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, DimensionMismatch, EmptyBank, MalformedHeader, ParseError

FBNK_MAGIC = b"FBNK"
FBNK_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True, eq=False)
class FeatureBank:
    features: np.ndarray
    labels: np.ndarray
    class_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        features = np.array(self.features)
        labels = np.array(self.labels)
        if features.ndim != 2:
            raise DimensionMismatch(f"features must be 2-D, got shape {features.shape}")
        n, d = features.shape
        if n == 0:
            raise EmptyBank("feature bank has no rows")
        if d == 0:
            raise DimensionMismatch("feature bank has zero columns")
        if labels.shape != (n,):
            raise DimensionMismatch(f"expected {n} labels, got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer) or (labels < 0).any():
            raise ParseError("labels must be non-negative integers")
        if not np.isfinite(features).all():
            raise ParseError("feature bank contains non-finite values")
        features.setflags(write=False)
        labels = labels.astype(np.int64, copy=False)
        labels.setflags(write=False)
        index = {}
        for row, lab in enumerate(labels.tolist()):
            index.setdefault(lab, []).append(row)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_index", {k: np.asarray(v) for k, v in sorted(index.items())})

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def classes(self) -> list[int]:
        return list(self.class_index)


def _infer_format(path, fmt):
    if fmt is not None:
        if fmt not in ("fbnk", "csv"):
            raise ValueError(f"unknown bank format {fmt!r}")
        return fmt
    return "csv" if Path(path).suffix.lower() == ".csv" else "fbnk"


def decode_fbnk(raw: bytes) -> FeatureBank:
    if len(raw) < _HEADER.size:
        raise MalformedHeader(f"file too short for header ({len(raw)} bytes)")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != FBNK_MAGIC:
        raise MalformedHeader(f"bad magic {magic!r}")
    if version != FBNK_VERSION:
        raise MalformedHeader(f"unsupported version {version}")
    if n == 0:
        raise EmptyBank("fbnk file declares n = 0")
    expected = _HEADER.size + 4 * n * d + 4 * n
    if len(raw) != expected:
        raise DimensionMismatch(f"payload is {len(raw)} bytes, header implies {expected}")
    off = _HEADER.size
    features = np.frombuffer(raw, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=off + 4 * n * d)
    return FeatureBank(features.astype(np.float32), labels.astype(np.int64))


def encode_fbnk(bank: FeatureBank) -> bytes:
    if bank.labels.max() > 0xFFFFFFFF:
        raise ValueError("label does not fit in u32")
    header = _HEADER.pack(FBNK_MAGIC, FBNK_VERSION, bank.n, bank.d)
    body = np.ascontiguousarray(bank.features, dtype="<f4").tobytes()
    return header + body + bank.labels.astype("<u4").tobytes()


def parse_csv(text: str) -> FeatureBank:
    rows, labels = [], []
    for lineno, rec in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not rec or all(not f.strip() for f in rec):
            continue
        try:
            labels.append(int(rec[0]))
            rows.append([float(v) for v in rec[1:]])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if len(rows[-1]) != len(rows[0]):
            raise DimensionMismatch(f"line {lineno}: {len(rows[-1])} features, expected {len(rows[0])}")
    if not rows:
        raise EmptyBank("CSV contains no samples")
    return FeatureBank(np.asarray(rows, dtype=np.float64), np.asarray(labels, dtype=np.int64))


def format_csv(bank: FeatureBank) -> str:
    out = io.StringIO()
    for lab, row in zip(bank.labels.tolist(), bank.features.tolist()):
        out.write(",".join([str(lab)] + [repr(v) for v in row]))
        out.write("\n")
    return out.getvalue()


def load_feature_bank(path, fmt: str | None = None) -> FeatureBank:
    """Read a bank from ``path``; ``fmt`` defaults to the file extension."""
    fmt = _infer_format(path, fmt)
    if fmt == "fbnk":
        return decode_fbnk(Path(path).read_bytes())
    return parse_csv(Path(path).read_text())


def save_feature_bank(bank: FeatureBank, path, fmt: str | None = None) -> None:
    fmt = _infer_format(path, fmt)
    if fmt == "fbnk":
        Path(path).write_bytes(encode_fbnk(bank))
    else:
        Path(path).write_text(format_csv(bank))


def pca_reduce(X: np.ndarray, target_dim: int) -> np.ndarray:
    """Project mean-centred ``X`` onto its leading ``target_dim`` principal directions.

    Directions come from an eigendecomposition of the sample covariance. Each
    direction's sign is chosen so its largest-magnitude entry is positive.
    Directions carrying no variance (beyond the data rank) yield zero columns.
    """
    X = np.asarray(X, dtype=np.float64)
    m, d = X.shape
    if target_dim < 1 or target_dim > min(m, d):
        raise DimensionError(f"target_dim={target_dim} outside [1, min(m={m}, d={d})]")
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / max(m - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    evals = evals[::-1][:target_dim]
    evecs = evecs[:, ::-1][:, :target_dim]
    lead = np.argmax(np.abs(evecs), axis=0)
    signs = np.sign(evecs[lead, np.arange(target_dim)])
    signs[signs == 0] = 1.0
    evecs = evecs * signs
    out = Xc @ evecs
    rank_tol = max(evals.max(initial=0.0), 0.0) * max(m, d) * np.finfo(np.float64).eps
    out[:, evals <= rank_tol] = 0.0
    return out


_PCA_RE = re.compile(r"^pca\((\d+)\)$")


@dataclass(frozen=True)
class PreprocessPipeline:
    """Ordered preprocessing steps: ``("center", None)``, ``("l2_normalize", None)``
    or ``("pca", target_dim)``."""

    steps: tuple = ()

    def __post_init__(self):
        steps = tuple((name, arg) for name, arg in self.steps)
        for name, arg in steps:
            if name == "pca":
                if not isinstance(arg, int) or arg < 1:
                    raise ValueError(f"pca target_dim must be a positive integer, got {arg!r}")
            elif name not in ("center", "l2_normalize"):
                raise ValueError(f"unknown preprocessing step {name!r}")
        object.__setattr__(self, "steps", steps)

    @classmethod
    def parse(cls, text: str) -> "PreprocessPipeline":
        """``"center,l2_normalize,pca(40),l2_normalize"``; empty string or ``none`` is the identity."""
        steps = []
        text = text.strip()
        if text.lower() in ("", "none"):
            return cls(())
        for tok in text.split(","):
            tok = tok.strip().lower()
            match = _PCA_RE.match(tok)
            if match:
                steps.append(("pca", int(match.group(1))))
            elif tok in ("center", "l2_normalize"):
                steps.append((tok, None))
            else:
                raise ValueError(f"unknown preprocessing step {tok!r}")
        return cls(tuple(steps))

    def __str__(self):
        if not self.steps:
            return "none"
        return ",".join(f"pca({arg})" if name == "pca" else name for name, arg in self.steps)


DEFAULT_PIPELINE = PreprocessPipeline((("center", None), ("l2_normalize", None), ("pca", 40), ("l2_normalize", None)))


def l2_normalize_rows(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)


def apply_pipeline(X: np.ndarray, pipeline: PreprocessPipeline, clamp_pca: bool = False) -> np.ndarray:
    """Run ``pipeline`` over the rows of ``X``.

    With ``clamp_pca`` a PCA step asking for more components than
    ``min(rows, cols)`` is reduced with a warning instead of raising.
    """
    X = np.array(X, dtype=np.float64)
    for name, arg in pipeline.steps:
        if name == "center":
            X = X - X.mean(axis=0)
        elif name == "l2_normalize":
            X = l2_normalize_rows(X)
        else:
            dim = arg
            limit = min(X.shape)
            if clamp_pca and dim > limit:
                warnings.warn(f"pca({dim}) clamped to pca({limit}) for a {X.shape[0]}x{X.shape[1]} input", stacklevel=2)
                dim = limit
            X = pca_reduce(X, dim)
    return X
