"""Glue between configs, training and evaluation; also the ablation grid runner."""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .config import ExperimentConfig
from .curriculum import AblationMode, LambdaSchedule
from .data import Dataset, compute_stats, generate_synthetic, split
from .environments import ALL_ENVIRONMENTS, EnvironmentKind
from .metrics import MetricsReport, evaluate, report_rows, score_dataset
from .model import ModelParams
from .trainer import TrainHistory, train

_ENV_CODES = {EnvironmentKind.NORMAL: "normal", EnvironmentKind.BALANCED: "balanced",
              EnvironmentKind.OVER_BALANCED: "over_balanced"}


def env_label(envs: frozenset[EnvironmentKind]) -> str:
    return "+".join(_ENV_CODES[e] for e in ALL_ENVIRONMENTS if e in envs)


def make_splits(cfg: ExperimentConfig) -> tuple[Dataset, Dataset, Dataset]:
    data = generate_synthetic(cfg.generator)
    return split(data, cfg.split.train_frac, cfg.split.val_count, cfg.split.seed)


def train_seed(cfg: ExperimentConfig, train_set: Dataset, seed: int,
               on_checkpoint=None) -> tuple[ModelParams, TrainHistory]:
    run = cfg.for_seed(seed)
    return train(train_set, compute_stats(train_set), run.model, run.train, on_checkpoint=on_checkpoint)


def evaluate_params(params: ModelParams, test_set: Dataset, ks: Sequence[int],
                    single_prediction: bool = False) -> list[MetricsReport]:
    preds = score_dataset(params, test_set, single_prediction=single_prediction)
    return [evaluate(preds, test_set, K) for K in ks]


@dataclass(frozen=True)
class Variant:
    env_subset: frozenset[EnvironmentKind]
    mode: AblationMode
    lambda_max: float
    T: int
    penalty_weight: float

    @property
    def name(self) -> str:
        return (f"env={env_label(self.env_subset)};mode={self.mode.value};lambda_max={self.lambda_max:g};"
                f"T={self.T};penalty={self.penalty_weight:g}")

    def apply(self, cfg: ExperimentConfig) -> ExperimentConfig:
        tr = replace(cfg.train, env_subset=self.env_subset, mode=self.mode, penalty_weight=self.penalty_weight,
                     schedule=LambdaSchedule(self.T, self.lambda_max))
        return replace(cfg, train=tr)


def ablation_grid(cfg: ExperimentConfig) -> list[Variant]:
    g = cfg.ablate
    return [Variant(e, m, lm, T, pw) for e, m, lm, T, pw in
            itertools.product(g.env_subsets, g.modes, g.lambda_max, g.T, g.penalty_weight)]


def _run_cell(args) -> list[MetricsReport]:
    cfg, variant, seed, train_set, test_set = args
    params, _ = train_seed(variant.apply(cfg), train_set, seed)
    return evaluate_params(params, test_set, cfg.eval_ks, cfg.single_prediction)


def run_variants(cfg: ExperimentConfig, variants: Sequence[Variant], seeds: Sequence[int],
                 train_set: Dataset, test_set: Dataset, jobs: int = 1
                 ) -> dict[tuple[Variant, int], list[MetricsReport]]:
    """Train and evaluate every (variant, seed) cell; results keyed in grid order."""
    cells = [(v, s) for v in variants for s in seeds]
    tasks = [(cfg, v, s, train_set, test_set) for v, s in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    return dict(zip(cells, results))


LONG_COLUMNS = ["variant", "seed", "metric", "K", "value"]


def write_ablation(results: dict[tuple[Variant, int], list[MetricsReport]], ks: Sequence[int],
                   out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    long_path, summary_path = out_dir / "ablation_long.csv", out_dir / "ablation_summary.csv"
    per_variant: dict[Variant, dict[tuple[str, int], list[float]]] = {}
    with open(long_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_COLUMNS)
        for (variant, seed), reports in results.items():
            acc = per_variant.setdefault(variant, {})
            for metric, K, value in report_rows(reports):
                w.writerow([variant.name, seed, metric, K, repr(value)])
                acc.setdefault((metric, K), []).append(value)
    metric_cols = [(m, K) for K in ks for m in ("R", "mR", "F", "mT")]
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "env_subset", "mode", "lambda_max", "T", "penalty_weight", "n_seeds"]
                   + [f"{m}@{K}" for m, K in metric_cols])
        for variant, acc in per_variant.items():
            n = len(acc[metric_cols[0]])
            w.writerow([variant.name, env_label(variant.env_subset), variant.mode.value, repr(variant.lambda_max),
                        variant.T, repr(variant.penalty_weight), n]
                       + [repr(math.fsum(acc[c]) / n) for c in metric_cols])
    return long_path, summary_path
