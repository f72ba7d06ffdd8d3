"""Synthetic relation datasets with independent class and context imbalance.

Every instance is a ground-truth (subject, predicate, object) triplet inside a
scene, plus a feature vector standing in for extracted relation features.
Features are ``prototype[predicate] + signature[subject, object] + noise``, so a
classifier can learn the predicate but is tempted to lean on the context pair.
"""

from __future__ import annotations

import csv
import math
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class ConfigError(ValueError):
    """A configuration value violates one of its invariants."""


class DataFormatError(ValueError):
    """A dataset file could not be parsed."""

    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"field {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class RelationInstance:
    scene_id: int
    subject_class: int
    object_class: int
    predicate_class: int
    features: tuple[float, ...]

    def validate(self, num_predicates: int, num_object_classes: int, feature_dim: int | None = None) -> None:
        if self.scene_id < 0:
            raise ValueError(f"negative scene_id {self.scene_id}")
        for name, value, bound in (
            ("subject_class", self.subject_class, num_object_classes),
            ("object_class", self.object_class, num_object_classes),
            ("predicate_class", self.predicate_class, num_predicates),
        ):
            if not 0 <= value < bound:
                raise ValueError(f"{name}={value} outside [0, {bound})")
        if feature_dim is not None and len(self.features) != feature_dim:
            raise ValueError(f"expected {feature_dim} features, got {len(self.features)}")
        if not all(math.isfinite(x) for x in self.features):
            raise ValueError("non-finite feature value")


Dataset = list[RelationInstance]


class DatasetArrays(NamedTuple):
    """Columnar view of a dataset, used by the numerical code paths."""

    scene_ids: np.ndarray
    subjects: np.ndarray
    objects: np.ndarray
    predicates: np.ndarray
    features: np.ndarray


def to_arrays(dataset: Sequence[RelationInstance]) -> DatasetArrays:
    if not dataset:
        raise ValueError("empty dataset")
    return DatasetArrays(
        scene_ids=np.array([r.scene_id for r in dataset], dtype=np.int64),
        subjects=np.array([r.subject_class for r in dataset], dtype=np.int64),
        objects=np.array([r.object_class for r in dataset], dtype=np.int64),
        predicates=np.array([r.predicate_class for r in dataset], dtype=np.int64),
        features=np.array([r.features for r in dataset], dtype=np.float64),
    )


def default_context_diversity(num_predicates: int, num_object_classes: int,
                              head: int = 40, tail: int = 2) -> dict[int, int]:
    """Pool sizes shrinking geometrically from the head predicate to the tail one."""
    cap = num_object_classes ** 2
    head, tail = min(head, cap), min(tail, cap)
    if num_predicates == 1:
        return {0: head}
    out = {}
    for c in range(num_predicates):
        frac = c / (num_predicates - 1)
        out[c] = max(1, int(round(head * (tail / head) ** frac)))
    return out


@dataclass
class GeneratorConfig:
    num_predicates: int = 20
    num_object_classes: int = 30
    num_scenes: int = 400
    relations_per_scene: int = 50
    zipf_exponent: float = 1.5
    context_diversity: dict[int, int] = field(default_factory=dict)
    feature_dim: int = 32
    noise_sigma: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not self.context_diversity:
            self.context_diversity = default_context_diversity(self.num_predicates, self.num_object_classes)

    def validate(self) -> None:
        for name in ("num_predicates", "num_object_classes", "num_scenes", "relations_per_scene", "feature_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if not self.zipf_exponent > 0:
            raise ConfigError(f"zipf_exponent must be > 0, got {self.zipf_exponent}")
        if not self.noise_sigma >= 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.seed < 0:
            raise ConfigError(f"seed must be unsigned, got {self.seed}")
        missing = set(range(self.num_predicates)) - set(self.context_diversity)
        if missing:
            raise ConfigError(f"context_diversity missing predicates {sorted(missing)}")
        cap = self.num_object_classes ** 2
        for c, k in self.context_diversity.items():
            if not 0 <= c < self.num_predicates:
                raise ConfigError(f"context_diversity has unknown predicate {c}")
            if not 1 <= k <= cap:
                raise ConfigError(
                    f"context_diversity[{c}]={k} must lie in [1, num_object_classes^2={cap}]")


def zipf_weights(num_classes: int, exponent: float) -> np.ndarray:
    """Normalized Zipf law: P(c) proportional to (c + 1) ** -exponent."""
    w = np.arange(1, num_classes + 1, dtype=np.float64) ** -exponent
    return w / w.sum()


def generate_synthetic(cfg: GeneratorConfig) -> Dataset:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    C, N, d = cfg.num_predicates, cfg.num_object_classes, cfg.feature_dim

    prototypes = rng.standard_normal((C, d))
    signatures = rng.standard_normal((N * N, d))
    pools = [rng.choice(N * N, size=cfg.context_diversity[c], replace=False) for c in range(C)]

    n = cfg.num_scenes * cfg.relations_per_scene
    predicates = rng.choice(C, size=n, p=zipf_weights(C, cfg.zipf_exponent))
    u = rng.random(n)
    pairs = np.empty(n, dtype=np.int64)
    for c in range(C):
        mask = predicates == c
        pool = pools[c]
        slot = np.minimum((u[mask] * len(pool)).astype(np.int64), len(pool) - 1)
        pairs[mask] = pool[slot]
    noise = rng.standard_normal((n, d)) * cfg.noise_sigma
    features = prototypes[predicates] + signatures[pairs] + noise

    subjects, objects = np.divmod(pairs, N)
    scene_ids = np.arange(n) // cfg.relations_per_scene
    return [
        RelationInstance(int(scene_ids[i]), int(subjects[i]), int(objects[i]), int(predicates[i]),
                         tuple(features[i].tolist()))
        for i in range(n)
    ]


@dataclass
class DatasetStats:
    counts: dict[int, int]
    median_count: float
    context_pair_counts: dict[int, dict[tuple[int, int], int]]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def median_of_counts(counts: dict[int, int]) -> float:
    positive = [n for n in counts.values() if n > 0]
    if not positive:
        raise ValueError("no class has a positive count")
    return float(statistics.median(positive))


def compute_stats(dataset: Iterable[RelationInstance], num_predicates: int | None = None) -> DatasetStats:
    """Per-predicate counts, their median and per-predicate context-pair tallies.

    With ``num_predicates`` given, unseen predicates appear in ``counts`` with 0;
    otherwise only observed predicates are listed.  The median always skips
    zero counts.
    """
    counts: Counter[int] = Counter()
    contexts: dict[int, Counter] = defaultdict(Counter)
    for r in dataset:
        counts[r.predicate_class] += 1
        contexts[r.predicate_class][(r.subject_class, r.object_class)] += 1
    if not counts:
        raise ValueError("cannot compute stats of an empty dataset")
    if num_predicates is not None:
        for c in range(num_predicates):
            counts.setdefault(c, 0)
    ordered = {c: counts[c] for c in sorted(counts)}
    return DatasetStats(
        counts=ordered,
        median_count=median_of_counts(ordered),
        context_pair_counts={c: dict(sorted(contexts[c].items())) for c in sorted(contexts)},
    )


def save_stats(stats: DatasetStats, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["predicate", "count", "context_pairs"])
        for c, n in stats.counts.items():
            w.writerow([c, n, len(stats.context_pair_counts.get(c, {}))])


def load_stats_counts(path: str | Path) -> dict[int, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {int(row["predicate"]): int(row["count"]) for row in csv.DictReader(fh)}


_FIXED_COLUMNS = ["scene_id", "subject", "object", "predicate"]


def save_dataset(dataset: Sequence[RelationInstance], path: str | Path,
                 num_predicates: int | None = None, num_object_classes: int | None = None) -> None:
    """Write the dataset CSV.

    When the class ranges are known they go into a leading ``#`` line so the
    loader can range-check indices.
    """
    d = len(dataset[0].features) if dataset else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if num_predicates is not None and num_object_classes is not None:
            fh.write(f"# num_predicates={num_predicates} num_object_classes={num_object_classes}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_FIXED_COLUMNS + [f"feat_{j}" for j in range(d)])
        for r in dataset:
            # repr is the shortest string that round-trips the double exactly
            w.writerow([r.scene_id, r.subject_class, r.object_class, r.predicate_class]
                       + [repr(x) for x in r.features])


def _parse_meta(line: str) -> dict[str, int]:
    meta = {}
    for token in line.lstrip("#").split():
        key, _, value = token.partition("=")
        meta[key] = int(value)
    return meta


def load_dataset(path: str | Path, num_predicates: int | None = None,
                 num_object_classes: int | None = None) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    lineno = 0
    if lines and lines[0].startswith("#"):
        try:
            meta = _parse_meta(lines[0])
        except ValueError:
            raise DataFormatError("malformed metadata line", line=1) from None
        num_predicates = num_predicates if num_predicates is not None else meta.get("num_predicates")
        num_object_classes = num_object_classes if num_object_classes is not None else meta.get("num_object_classes")
        lineno = 1
    if lineno >= len(lines):
        raise DataFormatError("missing header", line=lineno + 1)
    header = next(csv.reader([lines[lineno]]))
    lineno += 1
    d = len(header) - len(_FIXED_COLUMNS)
    if header[:4] != _FIXED_COLUMNS or header[4:] != [f"feat_{j}" for j in range(d)]:
        raise DataFormatError(f"unexpected header {header}", line=lineno)

    out: Dataset = []
    for row in csv.reader(lines[lineno:]):
        lineno += 1
        if not row:
            continue
        if len(row) != len(header):
            raise DataFormatError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        ints = []
        for name, raw in zip(_FIXED_COLUMNS, row[:4]):
            try:
                ints.append(int(raw))
            except ValueError:
                raise DataFormatError(f"not an integer: {raw!r}", line=lineno, column=name) from None
        scene, subj, obj, pred = ints
        if scene < 0:
            raise DataFormatError(f"negative scene id {scene}", line=lineno, column="scene_id")
        for name, value, bound in (("subject", subj, num_object_classes), ("object", obj, num_object_classes),
                                   ("predicate", pred, num_predicates)):
            if value < 0 or (bound is not None and value >= bound):
                raise DataFormatError(f"index {value} outside [0, {bound})", line=lineno, column=name)
        feats = []
        for j, raw in enumerate(row[4:]):
            try:
                x = float(raw)
            except ValueError:
                raise DataFormatError(f"not a number: {raw!r}", line=lineno, column=f"feat_{j}") from None
            if not math.isfinite(x):
                raise DataFormatError(f"non-finite value {raw!r}", line=lineno, column=f"feat_{j}")
            feats.append(x)
        out.append(RelationInstance(scene, subj, obj, pred, tuple(feats)))
    return out


def split(dataset: Sequence[RelationInstance], train_frac: float, val_count: int,
          seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """Scene-level train/val/test split.

    ``round(train_frac * scenes)`` scenes form the train partition, and
    ``val_count`` of those are moved to validation.  Instance order within each
    split follows the input order.
    """
    if not 0 < train_frac < 1:
        raise ValueError(f"train_frac must lie in (0, 1), got {train_frac}")
    if val_count < 0:
        raise ValueError(f"val_count must be non-negative, got {val_count}")
    scenes = sorted({r.scene_id for r in dataset})
    n_train_part = int(round(train_frac * len(scenes)))
    if val_count >= n_train_part:
        raise ValueError(f"val_count={val_count} must be smaller than the train partition ({n_train_part} scenes)")
    order = np.random.default_rng(seed).permutation(len(scenes))
    shuffled = [scenes[i] for i in order]
    val_ids = set(shuffled[:val_count])
    train_ids = set(shuffled[val_count:n_train_part])
    train, val, test = [], [], []
    for r in dataset:
        if r.scene_id in train_ids:
            train.append(r)
        elif r.scene_id in val_ids:
            val.append(r)
        else:
            test.append(r)
    return train, val, test
