"""Curriculum-scheduled multi-environment training for long-tailed relation (predicate) classification."""

from .curriculum import AblationMode, LambdaSchedule, hybrid_risk, lambda_at
from .data import (GeneratorConfig, RelationInstance, compute_stats, generate_synthetic, load_dataset,
                   save_dataset, split)
from .environments import EnvironmentKind, SamplingPlan, sample_batch, sampling_rates
from .metrics import (MetricsReport, ScoredTriplet, ScoredTriplets, evaluate, f_at_k, mean_recall_at_k, mt_at_k,
                      per_subject_recall, recall_at_k, score_dataset)
from .model import ModelConfig, ModelParams, backward, forward, init
from .risk import RiskValue, cross_entropy, env_risk, irm_penalty, regularized_env_risk
from .trainer import TrainConfig, TrainHistory, train

__all__ = [
    "AblationMode", "GeneratorConfig", "EnvironmentKind", "LambdaSchedule", "MetricsReport", "ModelConfig",
    "ModelParams", "RelationInstance", "RiskValue", "SamplingPlan", "ScoredTriplet", "ScoredTriplets",
    "TrainConfig", "TrainHistory", "backward", "compute_stats", "cross_entropy", "env_risk", "evaluate",
    "f_at_k", "forward", "generate_synthetic", "hybrid_risk", "init", "irm_penalty", "lambda_at",
    "load_dataset", "mean_recall_at_k", "mt_at_k", "per_subject_recall", "recall_at_k", "regularized_env_risk",
    "sample_batch", "sampling_rates", "save_dataset", "score_dataset", "split", "train",
]

__version__ = "0.1.0"
