"""Normal, class-balanced and over-balanced training environments."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import DatasetStats, RelationInstance


class EnvironmentKind(enum.Enum):
    NORMAL = "normal"
    BALANCED = "balanced"
    OVER_BALANCED = "over_balanced"

    @classmethod
    def parse(cls, text: str) -> "EnvironmentKind":
        key = text.strip().lower().replace("-", "_")
        aliases = {"norm": "normal", "bal": "balanced", "over": "over_balanced", "overbalanced": "over_balanced"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown environment {text!r}") from None


ALL_ENVIRONMENTS = (EnvironmentKind.NORMAL, EnvironmentKind.BALANCED, EnvironmentKind.OVER_BALANCED)


@dataclass(frozen=True)
class SamplingPlan:
    rates: dict[int, float]
    class_weights: dict[int, float]
    median: float

    def rate_array(self, num_classes: int) -> np.ndarray:
        out = np.zeros(num_classes)
        for c, s in self.rates.items():
            out[c] = s
        return out

    def weight_array(self, num_classes: int) -> np.ndarray:
        out = np.zeros(num_classes)
        for c, w in self.class_weights.items():
            out[c] = w
        return out

    def dump(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["predicate", "rate", "weight"])
            for c in sorted(self.rates):
                w.writerow([c, repr(self.rates[c]), repr(self.class_weights[c])])


def sampling_rates(stats: DatasetStats) -> SamplingPlan:
    """Per-class resampling rates and over-balancing loss weights.

    Classes at or above the median count are subsampled to the median
    (``s = median / n``); smaller classes keep ``s = 1``.  Loss weights are
    ``1 / n``.
    """
    zero = [c for c, n in stats.counts.items() if n <= 0]
    if zero:
        raise ValueError(f"classes {zero} have zero count; drop them before building a sampling plan")
    median = stats.median_count
    rates = {c: (1.0 if n < median else median / n) for c, n in stats.counts.items()}
    weights = {c: 1.0 / n for c, n in stats.counts.items()}
    return SamplingPlan(rates=rates, class_weights=weights, median=median)


class EnvironmentSampler:
    """Index sampler over a fixed label array.

    Normal draws uniformly with replacement.  Balanced and over-balanced share
    one sampler: with replacement, each instance weighted by its class rate.
    """

    def __init__(self, labels: np.ndarray, plan: SamplingPlan):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size == 0:
            raise ValueError("cannot sample from an empty dataset")
        missing = set(np.unique(labels).tolist()) - set(plan.rates)
        if missing:
            raise ValueError(f"labels {sorted(missing)} have no sampling rate")
        self.n = labels.size
        rate = plan.rate_array(int(labels.max()) + 1)[labels]
        cdf = np.cumsum(rate)
        self._cdf = cdf / cdf[-1]

    def sample(self, env: EnvironmentKind, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        if env is EnvironmentKind.NORMAL:
            return rng.integers(0, self.n, size=batch_size)
        idx = np.searchsorted(self._cdf, rng.random(batch_size), side="right")
        return np.minimum(idx, self.n - 1)


def sample_batch(env: EnvironmentKind, dataset: Sequence[RelationInstance], plan: SamplingPlan,
                 batch_size: int, rng_state: np.random.Generator | int
                 ) -> tuple[list[RelationInstance], np.random.Generator]:
    """Draw one batch for ``env``; returns the batch and the advanced generator."""
    if not dataset:
        raise ValueError("cannot sample from an empty dataset")
    rng = rng_state if isinstance(rng_state, np.random.Generator) else np.random.default_rng(rng_state)
    labels = np.fromiter((r.predicate_class for r in dataset), dtype=np.int64, count=len(dataset))
    idx = EnvironmentSampler(labels, plan).sample(env, batch_size, rng)
    return [dataset[i] for i in idx], rng
