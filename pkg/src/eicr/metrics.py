"""Scene-graph relation metrics: R@K, mR@K, F@K, mT@K and per-subject recall.

Predictions are ranked per scene by descending score, ties broken by
ascending (subject, object, predicate).  A ground-truth triplet is hit when an
identical (subject, object, predicate) occurs among the scene's top K; each
prediction occurrence can hit at most one ground-truth triplet.

Every recall family is averaged the same way: within each scene, the recall
of a group (all GT, a predicate, a context, a subject) is matched / total; a
group's recall is the mean over scenes where it has GT; class-level metrics
average their groups without weighting.
"""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Hashable, Iterator, Sequence

import numpy as np

from .data import RelationInstance, to_arrays
from .model import ModelParams, forward
from .risk import softmax


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredTriplet:
    scene_id: int
    subject_class: int
    object_class: int
    predicate_class: int
    score: float


class ScoredTriplets:
    """Columnar collection of scored triplets."""

    def __init__(self, scene_ids, subjects, objects, predicates, scores):
        self.scene_ids = np.asarray(scene_ids, dtype=np.int64)
        self.subjects = np.asarray(subjects, dtype=np.int64)
        self.objects = np.asarray(objects, dtype=np.int64)
        self.predicates = np.asarray(predicates, dtype=np.int64)
        self.scores = np.asarray(scores, dtype=np.float64)
        n = self.scene_ids.size
        if any(a.shape != (n,) for a in (self.subjects, self.objects, self.predicates, self.scores)):
            raise MetricsError("prediction columns must be 1-D and equally long")
        if not np.all(np.isfinite(self.scores)):
            raise MetricsError("prediction scores must be finite")

    @classmethod
    def from_records(cls, records: Sequence[ScoredTriplet]) -> "ScoredTriplets":
        return cls([r.scene_id for r in records], [r.subject_class for r in records],
                   [r.object_class for r in records], [r.predicate_class for r in records],
                   [r.score for r in records])

    def __len__(self) -> int:
        return int(self.scene_ids.size)

    def __iter__(self) -> Iterator[ScoredTriplet]:
        for i in range(len(self)):
            yield ScoredTriplet(int(self.scene_ids[i]), int(self.subjects[i]), int(self.objects[i]),
                                int(self.predicates[i]), float(self.scores[i]))

    def transform_scores(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ScoredTriplets":
        return ScoredTriplets(self.scene_ids, self.subjects, self.objects, self.predicates, fn(self.scores))


def score_dataset(params: ModelParams, dataset: Sequence[RelationInstance],
                  single_prediction: bool = False) -> ScoredTriplets:
    """Score every predicate for every ground-truth pair with its softmax probability.

    With ``single_prediction`` only the argmax predicate of each pair is kept
    (lowest index on ties).
    """
    arrays = to_arrays(dataset)
    probs = softmax(forward(params, arrays.features))
    n, C = probs.shape
    if single_prediction:
        best = probs.argmax(axis=1)
        return ScoredTriplets(arrays.scene_ids, arrays.subjects, arrays.objects, best,
                              probs[np.arange(n), best])
    return ScoredTriplets(np.repeat(arrays.scene_ids, C), np.repeat(arrays.subjects, C),
                          np.repeat(arrays.objects, C), np.tile(np.arange(C), n), probs.ravel())


def _top_k_by_scene(preds: ScoredTriplets, K: int) -> dict[int, Counter]:
    # lexsort: last key is primary
    order = np.lexsort((preds.predicates, preds.objects, preds.subjects, -preds.scores, preds.scene_ids))
    scenes = preds.scene_ids[order]
    starts = np.flatnonzero(np.r_[True, scenes[1:] != scenes[:-1]])
    ends = np.r_[starts[1:], scenes.size]
    out: dict[int, Counter] = {}
    for s, e in zip(starts, ends):
        top = order[s:min(e, s + K)]
        out[int(scenes[s])] = Counter(zip(preds.subjects[top].tolist(), preds.objects[top].tolist(),
                                          preds.predicates[top].tolist()))
    return out


@dataclass
class MatchResult:
    """Per ground-truth instance: scene, (subject, object, predicate) and whether it was hit."""

    scene_ids: list[int]
    triplets: list[tuple[int, int, int]]
    matched: list[bool]


def match(preds: ScoredTriplets, gt: Sequence[RelationInstance], K: int) -> MatchResult:
    if K < 1:
        raise MetricsError(f"K must be >= 1, got {K}")
    if not gt:
        raise MetricsError("empty ground truth")
    top = _top_k_by_scene(preds, K)
    remaining: dict[int, Counter] = {}
    scene_ids, triplets, matched = [], [], []
    for r in gt:
        if r.scene_id not in top:
            raise MetricsError(f"scene {r.scene_id} has ground truth but no predictions")
        key = (r.subject_class, r.object_class, r.predicate_class)
        budget = remaining.setdefault(r.scene_id, top[r.scene_id].copy())
        hit = budget[key] > 0
        if hit:
            budget[key] -= 1
        scene_ids.append(r.scene_id)
        triplets.append(key)
        matched.append(hit)
    return MatchResult(scene_ids, triplets, matched)


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def grouped_recall(m: MatchResult, group: Callable[[tuple[int, int, int]], Hashable]) -> dict:
    """Recall per group: per-scene matched/total, averaged over scenes where the group has GT."""
    tally: dict[Hashable, dict[int, list[int]]] = defaultdict(dict)
    for scene, trip, hit in zip(m.scene_ids, m.triplets, m.matched):
        cell = tally[group(trip)].setdefault(scene, [0, 0])
        cell[0] += hit
        cell[1] += 1
    return {g: _mean(h / n for h, n in per_scene.values()) for g, per_scene in sorted(tally.items())}


def _as_match(preds, gt, K) -> MatchResult:
    return preds if isinstance(preds, MatchResult) else match(preds, gt, K)


def recall_at_k(preds: ScoredTriplets, gt: Sequence[RelationInstance], K: int) -> float:
    return grouped_recall(_as_match(preds, gt, K), lambda trip: None)[None]


def mean_recall_at_k(preds: ScoredTriplets, gt: Sequence[RelationInstance], K: int) -> tuple[float, dict[int, float]]:
    per_class = grouped_recall(_as_match(preds, gt, K), lambda trip: trip[2])
    return _mean(per_class.values()), per_class


def mt_at_k(preds: ScoredTriplets, gt: Sequence[RelationInstance],
            K: int) -> tuple[float, dict[tuple[int, int, int], float]]:
    """Mean over predicates of the mean recall over that predicate's (subject, object) contexts.

    ``per_context`` is keyed by (predicate, subject, object).
    """
    per_context = grouped_recall(_as_match(preds, gt, K), lambda trip: (trip[2], trip[0], trip[1]))
    by_class: dict[int, list[float]] = defaultdict(list)
    for (pred, _, _), r in per_context.items():
        by_class[pred].append(r)
    return _mean(_mean(v) for v in by_class.values()), per_context


def per_subject_recall(preds: ScoredTriplets, gt: Sequence[RelationInstance], K: int,
                       predicate: int) -> dict[int, float]:
    m = _as_match(preds, gt, K)
    if not any(trip[2] == predicate for trip in m.triplets):
        raise MetricsError(f"predicate {predicate} has no ground-truth support")
    rec = grouped_recall(m, lambda trip: (trip[2], trip[0]))
    return {subj: r for (pred, subj), r in rec.items() if pred == predicate}


def f_at_k(r: float, mr: float) -> float:
    """Harmonic mean of R@K and mR@K (either both fractions or both percentages)."""
    if r < 0 or mr < 0:
        raise ValueError(f"recalls must be non-negative, got {r}, {mr}")
    if r + mr == 0:
        return 0.0
    # sorted operands make the result exactly symmetric; the ratio form avoids underflow of r * mr
    lo, hi = sorted((r, mr))
    return 2.0 * lo * (hi / (lo + hi))


@dataclass
class MetricsReport:
    K: int
    r_at_k: float
    mr_at_k: float
    f_at_k: float
    mt_at_k: float
    per_class_recall: dict[int, float] = field(default_factory=dict)
    per_context_recall: dict[tuple[int, int, int], float] = field(default_factory=dict)
    per_subject_recall: dict[tuple[int, int], float] = field(default_factory=dict)


def evaluate(preds: ScoredTriplets, gt: Sequence[RelationInstance], K: int) -> MetricsReport:
    m = match(preds, gt, K)
    r = recall_at_k(m, gt, K)
    mr, per_class = mean_recall_at_k(m, gt, K)
    mt, per_context = mt_at_k(m, gt, K)
    per_subject = grouped_recall(m, lambda trip: (trip[2], trip[0]))
    return MetricsReport(K=K, r_at_k=r, mr_at_k=mr, f_at_k=f_at_k(r, mr), mt_at_k=mt,
                         per_class_recall=per_class, per_context_recall=per_context,
                         per_subject_recall=per_subject)


# ---- file formats -------------------------------------------------------

def save_predictions(preds: ScoredTriplets, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scene_id", "subject", "object", "predicate", "score"])
        for t in preds:
            w.writerow([t.scene_id, t.subject_class, t.object_class, t.predicate_class, repr(t.score)])


def load_predictions(path: str | Path) -> ScoredTriplets:
    cols: dict[str, list] = {k: [] for k in ("scene_id", "subject", "object", "predicate", "score")}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(cols):
            raise MetricsError(f"{path}: unexpected header {reader.fieldnames}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                for k in ("scene_id", "subject", "object", "predicate"):
                    cols[k].append(int(rec[k]))
                cols["score"].append(float(rec["score"]))
            except (TypeError, ValueError):
                raise MetricsError(f"{path}: malformed row at line {lineno}") from None
    return ScoredTriplets(cols["scene_id"], cols["subject"], cols["object"], cols["predicate"], cols["score"])


REPORT_METRICS = ("R", "mR", "F", "mT")


def report_rows(reports: Sequence[MetricsReport]) -> list[tuple[str, int, float]]:
    """``(metric, K, percent)`` rows; F is recomputed from the percentage R and mR."""
    rows = []
    for rep in reports:
        r_pct, mr_pct = 100.0 * rep.r_at_k, 100.0 * rep.mr_at_k
        rows += [("R", rep.K, r_pct), ("mR", rep.K, mr_pct), ("F", rep.K, f_at_k(r_pct, mr_pct)),
                 ("mT", rep.K, 100.0 * rep.mt_at_k)]
    return rows


def write_reports(reports: Sequence[MetricsReport], out_dir: str | Path, prefix: str = "") -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out_dir / f"{prefix}report.csv",
        "per_class": out_dir / f"{prefix}per_class.csv",
        "per_context": out_dir / f"{prefix}per_context.csv",
        "per_subject": out_dir / f"{prefix}per_subject.csv",
    }
    with open(paths["report"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "K", "value"])
        for metric, K, value in report_rows(reports):
            w.writerow([metric, K, repr(value)])
    with open(paths["per_class"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["predicate", "K", "recall"])
        for rep in reports:
            for c, v in rep.per_class_recall.items():
                w.writerow([c, rep.K, repr(100.0 * v)])
    with open(paths["per_context"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["predicate", "subject", "object", "K", "recall"])
        for rep in reports:
            for (c, s, o), v in rep.per_context_recall.items():
                w.writerow([c, s, o, rep.K, repr(100.0 * v)])
    with open(paths["per_subject"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["predicate", "subject", "K", "recall"])
        for rep in reports:
            for (c, s), v in rep.per_subject_recall.items():
                w.writerow([c, s, rep.K, repr(100.0 * v)])
    return paths


def read_report(path: str | Path) -> dict[tuple[str, int], float]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {(rec["metric"], int(rec["K"])): float(rec["value"]) for rec in csv.DictReader(fh)}
