import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eicr.data import RelationInstance
from eicr.metrics import (MetricsError, ScoredTriplets, evaluate, f_at_k, load_predictions, match,
                          mean_recall_at_k, mt_at_k, per_subject_recall, read_report, recall_at_k,
                          save_predictions, score_dataset, write_reports)
from eicr.model import ModelConfig, ModelParams, init

from oracles import (brute_mean_recall, brute_mt, brute_per_subject, brute_recall, naive_softmax,
                     random_eval_instance)


def to_gt(rows):
    return [RelationInstance(sc, s, o, p, (0.0,)) for sc, s, o, p in rows]


def to_preds(rows):
    cols = list(zip(*rows)) if rows else [[]] * 5
    return ScoredTriplets(*cols)


# ---- score_dataset ---------------------------------------------------------

def _instances(n, d, seed=0):
    rng = np.random.default_rng(seed)
    return [RelationInstance(i // 3, i % 4, (i + 1) % 4, i % 2, tuple(rng.normal(size=d))) for i in range(n)]


def test_zero_params_give_uniform_scores():
    params = ModelParams(W=np.zeros((5, 3)), b=np.zeros(5))
    preds = score_dataset(params, _instances(6, 3))
    assert len(preds) == 30
    assert np.all(preds.scores == 1 / 5)


def test_two_class_softmax_scores():
    params = ModelParams(W=np.zeros((2, 1)), b=np.array([math.log(3), 0.0]))
    preds = score_dataset(params, [RelationInstance(0, 1, 2, 0, (4.0,))])
    assert preds.predicates.tolist() == [0, 1]
    np.testing.assert_allclose(preds.scores, [0.75, 0.25], atol=1e-15)


@pytest.mark.parametrize("h", [0, 5])
def test_scores_match_softmax_oracle_and_normalize(h):
    params = init(ModelConfig(feature_dim=4, num_predicates=6, hidden_dim=h, init_scale=1.0, seed=h))
    data = _instances(9, 4, seed=1)
    preds = score_dataset(params, data)
    per_pair = preds.scores.reshape(9, 6)
    np.testing.assert_allclose(per_pair.sum(1), 1.0, atol=1e-12)
    assert np.all((per_pair > 0) & (per_pair < 1))
    if h == 0:
        for row, inst in zip(per_pair, data):
            logits = [float(params.b[c] + params.W[c] @ np.array(inst.features)) for c in range(6)]
            np.testing.assert_allclose(row, naive_softmax(logits), atol=1e-12)


def test_single_prediction_keeps_argmax():
    params = init(ModelConfig(feature_dim=4, num_predicates=6, init_scale=1.0, seed=2))
    data = _instances(9, 4, seed=3)
    full = score_dataset(params, data).scores.reshape(9, 6)
    single = score_dataset(params, data, single_prediction=True)
    assert len(single) == 9
    assert single.predicates.tolist() == full.argmax(1).tolist()
    np.testing.assert_array_equal(single.scores, full.max(1))


def test_score_dataset_dimension_mismatch():
    params = ModelParams(W=np.zeros((2, 3)), b=np.zeros(2))
    with pytest.raises(ValueError):
        score_dataset(params, _instances(2, 4))


# ---- recall family: worked examples ---------------------------------------

def test_perfect_single_triplet():
    gt = to_gt([(0, 1, 2, 0)])
    preds = to_preds([(0, 1, 2, 0, 0.9), (0, 1, 2, 1, 0.1)])
    for K in (1, 2, 10):
        assert recall_at_k(preds, gt, K) == 1.0


def test_half_recall():
    gt = to_gt([(0, 1, 2, 0), (0, 2, 1, 1)])
    preds = to_preds([(0, 1, 2, 0, 0.9), (0, 2, 1, 0, 0.5), (0, 2, 1, 1, 0.2)])
    assert recall_at_k(preds, gt, 2) == 0.5


def test_recall_is_per_scene_average():
    gt = to_gt([(0, 0, 0, 0), (1, 0, 0, 0), (1, 1, 1, 0)])
    preds = to_preds([(0, 0, 0, 0, 0.9), (1, 0, 0, 0, 0.9), (1, 1, 1, 1, 0.8)])
    # scene 0: 1/1, scene 1: 1/2
    assert recall_at_k(preds, gt, 5) == 0.75


def test_duplicate_gt_needs_distinct_predictions():
    gt = to_gt([(0, 1, 1, 0), (0, 1, 1, 0)])
    one = to_preds([(0, 1, 1, 0, 0.9), (0, 1, 1, 1, 0.8)])
    two = to_preds([(0, 1, 1, 0, 0.9), (0, 1, 1, 0, 0.85), (0, 1, 1, 1, 0.8)])
    assert recall_at_k(one, gt, 5) == 0.5
    assert recall_at_k(two, gt, 5) == 1.0


def test_tie_break_is_lexicographic():
    gt = to_gt([(0, 0, 1, 1)])
    preds = to_preds([(0, 0, 1, 1, 0.5), (0, 0, 1, 0, 0.5)])
    # tie on score: (0, 1, 0) ranks before (0, 1, 1)
    assert recall_at_k(preds, gt, 1) == 0.0
    assert recall_at_k(preds, gt, 2) == 1.0


def test_missing_scene_is_an_error():
    with pytest.raises(MetricsError, match="scene 3"):
        recall_at_k(to_preds([(0, 0, 0, 0, 1.0)]), to_gt([(3, 0, 0, 0)]), 5)


@pytest.mark.parametrize("K", [0, -1])
def test_invalid_k(K):
    with pytest.raises(MetricsError):
        recall_at_k(to_preds([(0, 0, 0, 0, 1.0)]), to_gt([(0, 0, 0, 0)]), K)


def test_mean_recall_two_classes():
    gt = to_gt([(0, 0, 0, 0), (0, 1, 1, 1)])
    preds = to_preds([(0, 0, 0, 0, 0.9), (0, 1, 1, 0, 0.8), (0, 1, 1, 1, 0.1)])
    mr, per_class = mean_recall_at_k(preds, gt, 2)
    assert per_class == {0: 1.0, 1: 0.0}
    assert mr == 0.5


def test_mean_recall_single_class_equals_recall():
    rnd = random.Random(5)
    for _ in range(20):
        gt, preds, _ = random_eval_instance(rnd)
        gt = [(sc, s, o, 0) for sc, s, o, _ in gt]
        preds = [(sc, s, o, 0, score) for sc, s, o, _, score in preds]
        K = rnd.randint(1, 8)
        assert mean_recall_at_k(to_preds(preds), to_gt(gt), K)[0] == recall_at_k(to_preds(preds), to_gt(gt), K)


def test_per_class_only_for_supported_classes():
    gt = to_gt([(0, 0, 0, 2)])
    preds = to_preds([(0, 0, 0, c, 0.1 * c) for c in range(4)])
    assert set(mean_recall_at_k(preds, gt, 1)[1]) == {2}


def test_mt_two_context_groups():
    gt = to_gt([(0, 0, 1, 0), (0, 2, 2, 0), (0, 2, 2, 0)])
    preds = to_preds([(0, 0, 1, 0, 0.9), (0, 2, 2, 0, 0.8), (0, 2, 2, 1, 0.1)])
    mt, per_ctx = mt_at_k(preds, gt, 3)
    assert per_ctx == {(0, 0, 1): 1.0, (0, 2, 2): 0.5}
    assert mt == 0.75


def test_mt_equals_mr_with_one_context_per_class():
    rnd = random.Random(6)
    for _ in range(20):
        gt, preds, C = random_eval_instance(rnd)
        # force each predicate to a single (subject, object) context
        gt = [(sc, p, p, p) for sc, _, _, p in gt]
        preds = [(sc, p, p, p, score) for sc, _, _, p, score in preds]
        K = rnd.randint(1, 8)
        assert mt_at_k(to_preds(preds), to_gt(gt), K)[0] == mean_recall_at_k(to_preds(preds), to_gt(gt), K)[0]


def test_per_subject_single_subject_equals_class_recall():
    gt = to_gt([(0, 3, 0, 1), (0, 3, 1, 1), (1, 3, 2, 1), (1, 0, 0, 0)])
    preds = to_preds([(0, 3, 0, 1, 0.9), (0, 3, 1, 0, 0.8), (0, 3, 1, 1, 0.3), (1, 3, 2, 1, 0.6),
                      (1, 0, 0, 0, 0.5)])
    per_subj = per_subject_recall(preds, gt, 2, predicate=1)
    assert list(per_subj) == [3]
    assert per_subj[3] == mean_recall_at_k(preds, gt, 2)[1][1]


def test_per_subject_fully_recalled():
    gt = to_gt([(0, 1, 0, 0), (0, 1, 2, 0), (0, 2, 2, 0)])
    preds = to_preds([(0, 1, 0, 0, 0.9), (0, 1, 2, 0, 0.8), (0, 2, 2, 0, 0.1), (0, 2, 2, 1, 0.5)])
    assert per_subject_recall(preds, gt, 3, 0) == {1: 1.0, 2: 0.0}


def test_per_subject_unsupported_predicate():
    with pytest.raises(MetricsError):
        per_subject_recall(to_preds([(0, 0, 0, 0, 1.0)]), to_gt([(0, 0, 0, 0)]), 1, predicate=3)


# ---- oracle equivalence and properties ------------------------------------

@pytest.mark.parametrize("seed", range(40))
def test_matches_brute_force(seed):
    rnd = random.Random(seed)
    gt_rows, pred_rows, _ = random_eval_instance(rnd, max_classes=3)
    gt, preds = to_gt(gt_rows), to_preds(pred_rows)
    for K in (1, 2, 3, 5, 8, 20):
        assert recall_at_k(preds, gt, K) == brute_recall(pred_rows, gt_rows, K)
        assert mean_recall_at_k(preds, gt, K) == brute_mean_recall(pred_rows, gt_rows, K)
        mt, per_ctx = mt_at_k(preds, gt, K)
        bmt, bctx = brute_mt(pred_rows, gt_rows, K)
        assert mt == bmt and per_ctx == bctx
        for p in {r[3] for r in gt_rows}:
            assert per_subject_recall(preds, gt, K, p) == brute_per_subject(pred_rows, gt_rows, K, p)


instance_seeds = st.integers(0, 2**32 - 1)


@given(instance_seeds, st.integers(1, 12))
@settings(max_examples=100, deadline=None)
def test_metrics_bounded_and_monotone_in_k(seed, K):
    gt_rows, pred_rows, _ = random_eval_instance(random.Random(seed))
    gt, preds = to_gt(gt_rows), to_preds(pred_rows)
    lo, hi = evaluate(preds, gt, K), evaluate(preds, gt, K + 1)
    for name in ("r_at_k", "mr_at_k", "mt_at_k", "f_at_k"):
        assert 0.0 <= getattr(lo, name) <= 1.0
    assert lo.r_at_k <= hi.r_at_k
    assert lo.mr_at_k <= hi.mr_at_k
    assert lo.mt_at_k <= hi.mt_at_k


@given(instance_seeds, st.integers(1, 12),
       st.sampled_from([lambda s: 3 * s + 1, np.exp, lambda s: s ** 3, lambda s: np.arctan(s) - 7]))
@settings(max_examples=100, deadline=None)
def test_increasing_score_transform_leaves_metrics_unchanged(seed, K, fn):
    gt_rows, pred_rows, _ = random_eval_instance(random.Random(seed))
    gt, preds = to_gt(gt_rows), to_preds(pred_rows)
    a = evaluate(preds, gt, K)
    b = evaluate(preds.transform_scores(fn), gt, K)
    assert a == b


# ---- F@K -------------------------------------------------------------------

def test_f_examples():
    assert round(f_at_k(55.3, 34.9), 1) == 42.8
    assert round(f_at_k(57.4, 37.0), 1) == 45.0
    assert f_at_k(50, 50) == 50
    assert f_at_k(0, 0) == 0.0
    for x in (0.0, 0.3, 80.0):
        assert f_at_k(x, 0) == 0.0


def test_f_rejects_negative():
    with pytest.raises(ValueError):
        f_at_k(-0.1, 0.5)


@given(st.floats(0, 100), st.floats(0, 100))
@settings(max_examples=200)
def test_f_symmetric_and_idempotent(a, b):
    assert f_at_k(a, b) == f_at_k(b, a)
    assert f_at_k(a, a) == pytest.approx(a, rel=1e-15, abs=0)
    assert min(a, b) <= f_at_k(a, b) * (1 + 1e-15) and f_at_k(a, b) <= max(a, b) * (1 + 1e-15)


# ---- file formats ----------------------------------------------------------

def test_predictions_round_trip(tmp_path):
    _, pred_rows, _ = random_eval_instance(random.Random(1))
    preds = to_preds([(sc, s, o, p, score + 1 / 3) for sc, s, o, p, score in pred_rows])
    save_predictions(preds, tmp_path / "p.csv")
    back = load_predictions(tmp_path / "p.csv")
    assert list(back) == list(preds)


def test_load_predictions_rejects_bad_header(tmp_path):
    (tmp_path / "p.csv").write_text("scene,subject,object,predicate,score\n")
    with pytest.raises(MetricsError, match="header"):
        load_predictions(tmp_path / "p.csv")


def test_report_f_row_consistent(tmp_path):
    gt_rows, pred_rows, _ = random_eval_instance(random.Random(2))
    reports = [evaluate(to_preds(pred_rows), to_gt(gt_rows), K) for K in (1, 3, 10)]
    paths = write_reports(reports, tmp_path)
    rows = read_report(paths["report"])
    assert len(rows) == 12
    for K in (1, 3, 10):
        assert rows[("F", K)] == f_at_k(rows[("R", K)], rows[("mR", K)])
    assert rows[("R", 3)] == 100.0 * reports[1].r_at_k


def test_scored_triplets_validation():
    with pytest.raises(MetricsError):
        ScoredTriplets([0], [0], [0], [0], [float("nan")])
    with pytest.raises(MetricsError):
        ScoredTriplets([0, 1], [0], [0], [0], [0.5])


def test_match_result_alignment():
    gt_rows = [(0, 0, 0, 1), (0, 0, 0, 0)]
    m = match(to_preds([(0, 0, 0, 0, 0.9), (0, 0, 0, 1, 0.1)]), to_gt(gt_rows), 1)
    assert m.triplets == [(0, 0, 1), (0, 0, 0)]
    assert m.matched == [False, True]
