"""Toy relation model: optional tanh feature extractor followed by a linear classifier."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np


@dataclass
class ModelConfig:
    feature_dim: int
    num_predicates: int
    hidden_dim: int = 0
    init_scale: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if self.feature_dim < 1:
            raise ValueError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if self.num_predicates < 2:
            raise ValueError(f"num_predicates must be >= 2, got {self.num_predicates}")
        if self.hidden_dim < 0:
            raise ValueError(f"hidden_dim must be >= 0, got {self.hidden_dim}")
        if self.init_scale < 0:
            raise ValueError(f"init_scale must be >= 0, got {self.init_scale}")


@dataclass
class ModelParams:
    """Classifier ``W`` (C x m), ``b`` (C,), and extractor ``Wf`` (h x d), ``bf`` (h,) when h > 0."""

    W: np.ndarray
    b: np.ndarray
    Wf: np.ndarray | None = None
    bf: np.ndarray | None = None

    @property
    def hidden_dim(self) -> int:
        return 0 if self.Wf is None else self.Wf.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.W.shape[1] if self.Wf is None else self.Wf.shape[1]

    @property
    def num_predicates(self) -> int:
        return self.W.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.tensors().items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams(**{k: np.zeros_like(v) for k, v in self.tensors().items()})

    def axpy(self, alpha: float, other: "ModelParams") -> None:
        """In-place ``self += alpha * other``."""
        for k, v in other.tensors().items():
            getattr(self, k).__iadd__(alpha * v)

    def scale(self, alpha: float) -> None:
        for v in self.tensors().values():
            v *= alpha

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.tensors().values()])

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.tensors().values())

    def equals(self, other: "ModelParams") -> bool:
        a, b = self.tensors(), other.tensors()
        return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


def init(cfg: ModelConfig) -> ModelParams:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    s = cfg.init_scale
    if cfg.hidden_dim > 0:
        Wf = rng.uniform(-s, s, size=(cfg.hidden_dim, cfg.feature_dim))
        W = rng.uniform(-s, s, size=(cfg.num_predicates, cfg.hidden_dim))
        return ModelParams(W=W, b=np.zeros(cfg.num_predicates), Wf=Wf, bf=np.zeros(cfg.hidden_dim))
    W = rng.uniform(-s, s, size=(cfg.num_predicates, cfg.feature_dim))
    return ModelParams(W=W, b=np.zeros(cfg.num_predicates))


def _check_features(params: ModelParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.feature_dim:
        raise ValueError(f"features must have shape (B, {params.feature_dim}), got {x.shape}")
    return x


def _hidden(params: ModelParams, x: np.ndarray) -> np.ndarray:
    if params.Wf is None:
        return x
    return np.tanh(x @ params.Wf.T + params.bf)


def forward(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Logits of shape (B, C)."""
    x = _check_features(params, features)
    return _hidden(params, x) @ params.W.T + params.b


def backward(params: ModelParams, features: np.ndarray, dlogits: np.ndarray) -> ModelParams:
    """Parameter gradients of a scalar loss given its gradient w.r.t. the logits."""
    x = _check_features(params, features)
    g = np.asarray(dlogits, dtype=np.float64)
    if g.shape != (x.shape[0], params.num_predicates):
        raise ValueError(f"dlogits must have shape {(x.shape[0], params.num_predicates)}, got {g.shape}")
    h = _hidden(params, x)
    grads = ModelParams(W=g.T @ h, b=g.sum(axis=0))
    if params.Wf is not None:
        da = (g @ params.W) * (1.0 - h * h)
        grads.Wf = da.T @ x
        grads.bf = da.sum(axis=0)
    return grads


_TENSOR_ORDER = ("W", "b", "Wf", "bf")


def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    """Text dump: one ``name,rows,cols`` header per tensor followed by its rows.

    Values are written with ``repr`` so loading is bit-exact.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# eicr checkpoint v1\n")
        for name in _TENSOR_ORDER:
            t = getattr(params, name)
            if t is None:
                continue
            m = t.reshape(t.shape[0], -1) if t.ndim == 2 else t.reshape(1, -1)
            fh.write(f"{name},{t.ndim},{','.join(str(s) for s in t.shape)}\n")
            for row in m:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_checkpoint(path: str | Path) -> ModelParams:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("# eicr checkpoint"):
        raise ValueError(f"{path}: not an eicr checkpoint")
    tensors: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        if not lines[i]:
            i += 1
            continue
        head = lines[i].split(",")
        name, ndim = head[0], int(head[1])
        shape = tuple(int(s) for s in head[2:2 + ndim])
        nrows = shape[0] if ndim == 2 else 1
        rows = lines[i + 1:i + 1 + nrows]
        if len(rows) != nrows:
            raise ValueError(f"{path}: tensor {name} truncated")
        values = [float(v) for r in rows for v in r.split(",")]
        tensors[name] = np.array(values, dtype=np.float64).reshape(shape)
        i += 1 + nrows
    if "W" not in tensors or "b" not in tensors:
        raise ValueError(f"{path}: checkpoint lacks classifier tensors")
    return ModelParams(**tensors)
