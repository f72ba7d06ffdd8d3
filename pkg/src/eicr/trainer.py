"""Multi-environment training loop with IRM penalties and the curriculum schedule."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .curriculum import AblationMode, HybridRisk, LambdaSchedule, hybrid_risk, lambda_at
from .data import DatasetStats, RelationInstance, to_arrays
from .environments import ALL_ENVIRONMENTS, EnvironmentKind, EnvironmentSampler, SamplingPlan, sampling_rates
from .model import ModelConfig, ModelParams, backward, forward, init
from .risk import RiskValue, regularized_env_risk

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, message: str, iteration: int | None = None):
        self.iteration = iteration
        super().__init__(message if iteration is None else f"iteration {iteration}: {message}")


@dataclass
class TrainConfig:
    total_iterations: int = 12000
    batch_size: int = 4
    learning_rate: float = 0.0002
    momentum: float = 0.9
    schedule: LambdaSchedule = field(default_factory=LambdaSchedule)
    penalty_weight: float = 1.0
    mode: AblationMode = AblationMode.FULL
    env_subset: frozenset[EnvironmentKind] = frozenset(ALL_ENVIRONMENTS)
    # environments whose risk carries the IRM penalty
    penalized_envs: frozenset[EnvironmentKind] = frozenset(ALL_ENVIRONMENTS)
    seed: int = 0
    checkpoint_every: int = 1000
    warmup_iterations: int = 0
    log_every: int = 1

    def validate(self) -> None:
        if self.total_iterations < 1:
            raise ValueError(f"total_iterations must be >= 1, got {self.total_iterations}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.env_subset:
            raise ValueError("env_subset must not be empty")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.penalty_weight < 0:
            raise ValueError(f"penalty_weight must be >= 0, got {self.penalty_weight}")
        if self.checkpoint_every < 1 or self.log_every < 1:
            raise ValueError("checkpoint_every and log_every must be positive")
        if self.warmup_iterations < 0:
            raise ValueError(f"warmup_iterations must be >= 0, got {self.warmup_iterations}")

    def learning_rate_at(self, t: int) -> float:
        if self.warmup_iterations and t <= self.warmup_iterations:
            return self.learning_rate * t / self.warmup_iterations
        return self.learning_rate


HISTORY_COLUMNS = ["t", "lambda", "risk_norm", "risk_bal", "risk_over",
                   "pen_norm", "pen_bal", "pen_over", "hybrid"]

_ENV_SUFFIX = {EnvironmentKind.NORMAL: "norm", EnvironmentKind.BALANCED: "bal",
               EnvironmentKind.OVER_BALANCED: "over"}


@dataclass
class HistoryRow:
    t: int
    lam: float
    risks: dict[EnvironmentKind, float]
    penalties: dict[EnvironmentKind, float]
    hybrid: float


@dataclass
class TrainHistory:
    rows: list[HistoryRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[float | None]:
        return [_row_values(r)[name] for r in self.rows]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HISTORY_COLUMNS)
            for r in self.rows:
                vals = _row_values(r)
                w.writerow(["" if vals[c] is None else (vals[c] if c == "t" else repr(vals[c]))
                            for c in HISTORY_COLUMNS])

    @classmethod
    def from_csv(cls, path: str | Path) -> "TrainHistory":
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                risks, pens = {}, {}
                for env, suffix in _ENV_SUFFIX.items():
                    if rec[f"risk_{suffix}"] != "":
                        risks[env] = float(rec[f"risk_{suffix}"])
                        pens[env] = float(rec[f"pen_{suffix}"])
                rows.append(HistoryRow(int(rec["t"]), float(rec["lambda"]), risks, pens, float(rec["hybrid"])))
        return cls(rows)


def _row_values(r: HistoryRow) -> dict[str, float | int | None]:
    out: dict[str, float | int | None] = {"t": r.t, "lambda": r.lam, "hybrid": r.hybrid}
    for env, suffix in _ENV_SUFFIX.items():
        out[f"risk_{suffix}"] = r.risks.get(env)
        out[f"pen_{suffix}"] = r.penalties.get(env)
    return out


Batch = tuple[np.ndarray, np.ndarray]  # (features B x d, labels B)


def hybrid_objective(params: ModelParams, batches: Mapping[EnvironmentKind, Batch], plan: SamplingPlan,
                     lam: float, mode: AblationMode = AblationMode.FULL, penalty_weight: float = 1.0,
                     penalized_envs: frozenset[EnvironmentKind] = frozenset(ALL_ENVIRONMENTS),
                     ) -> tuple[HybridRisk, dict[EnvironmentKind, RiskValue], ModelParams]:
    """Hybrid risk over one batch per environment and its parameter gradient."""
    risks: dict[EnvironmentKind, RiskValue] = {}
    for env, (x, y) in batches.items():
        pw = penalty_weight if env in penalized_envs else 0.0
        risks[env] = regularized_env_risk(env, forward(params, x), y, plan, pw)
    hyb = hybrid_risk(lam, risks.get(EnvironmentKind.NORMAL), risks.get(EnvironmentKind.OVER_BALANCED),
                      risks.get(EnvironmentKind.BALANCED), mode)
    grads = params.zeros_like()
    for env, g in hyb.dlogits.items():
        grads.axpy(1.0, backward(params, batches[env][0], g))
    return hyb, risks, grads


def train(dataset_train: Sequence[RelationInstance], stats: DatasetStats, model_cfg: ModelConfig,
          train_cfg: TrainConfig,
          on_checkpoint: Callable[[int, ModelParams], None] | None = None,
          ) -> tuple[ModelParams, TrainHistory]:
    """Run SGD with momentum on the hybrid risk.

    Iterations are numbered from 1.  Each iteration draws one batch per
    environment in ``env_subset`` from a single generator seeded with
    ``train_cfg.seed``, in the order normal, balanced, over-balanced.
    """
    train_cfg.validate()
    model_cfg.validate()
    arrays = to_arrays(dataset_train)
    if arrays.features.shape[1] != model_cfg.feature_dim:
        raise ValueError(f"dataset feature_dim {arrays.features.shape[1]} != model feature_dim {model_cfg.feature_dim}")
    if arrays.predicates.max() >= model_cfg.num_predicates:
        raise ValueError("dataset contains predicates beyond the model's num_predicates")
    plan = sampling_rates(DatasetStats({c: n for c, n in stats.counts.items() if n > 0},
                                       stats.median_count, stats.context_pair_counts))
    sampler = EnvironmentSampler(arrays.predicates, plan)
    rng = np.random.default_rng(train_cfg.seed)

    params = init(model_cfg)
    velocity = params.zeros_like()
    history = TrainHistory()
    envs = [e for e in ALL_ENVIRONMENTS if e in train_cfg.env_subset]

    for t in range(1, train_cfg.total_iterations + 1):
        batches = {}
        for env in envs:
            idx = sampler.sample(env, train_cfg.batch_size, rng)
            batches[env] = (arrays.features[idx], arrays.predicates[idx])
        lam = lambda_at(train_cfg.schedule, t)
        # overflow surfaces as a non-finite loss, reported below
        with np.errstate(over="ignore", invalid="ignore"):
            hyb, risks, grads = hybrid_objective(params, batches, plan, lam, train_cfg.mode,
                                                 train_cfg.penalty_weight, train_cfg.penalized_envs)
        if not math.isfinite(hyb.value) or not grads.all_finite():
            raise TrainingError("non-finite loss", iteration=t)

        with np.errstate(over="ignore", invalid="ignore"):
            velocity.scale(train_cfg.momentum)
            velocity.axpy(-train_cfg.learning_rate_at(t), grads)
            params.axpy(1.0, velocity)

        if t % train_cfg.log_every == 0 or t == train_cfg.total_iterations:
            history.rows.append(HistoryRow(
                t=t, lam=lam,
                risks={e: r.risk for e, r in risks.items()},
                penalties={e: r.penalty for e, r in risks.items()},
                hybrid=hyb.value,
            ))
        if on_checkpoint is not None and (t % train_cfg.checkpoint_every == 0 or t == train_cfg.total_iterations):
            on_checkpoint(t, params.copy())
    if not params.all_finite():
        raise TrainingError("parameters diverged", iteration=train_cfg.total_iterations)
    log.debug("trained %d iterations, final hybrid %.6f", train_cfg.total_iterations, history.rows[-1].hybrid)
    return params, history
