import math

import numpy as np
import pytest

from eicr.curriculum import AblationMode, LambdaSchedule, lambda_at
from eicr.data import DatasetStats, GeneratorConfig, RelationInstance, compute_stats, generate_synthetic, to_arrays
from eicr.environments import ALL_ENVIRONMENTS, EnvironmentKind, EnvironmentSampler, sampling_rates
from eicr.model import ModelConfig, init
from eicr.risk import cross_entropy
from eicr.trainer import TrainConfig, TrainingError, TrainHistory, hybrid_objective, train

from oracles import assert_gradients_close, central_difference, naive_softmax

E = EnvironmentKind


@pytest.fixture(scope="module")
def small_data():
    cfg = GeneratorConfig(num_predicates=5, num_object_classes=6, num_scenes=40, relations_per_scene=5,
                          feature_dim=6, noise_sigma=0.5, seed=2)
    data = generate_synthetic(cfg)
    return data, compute_stats(data)


def mcfg(**kw):
    base = dict(feature_dim=6, num_predicates=5, init_scale=0.1, seed=0)
    base.update(kw)
    return ModelConfig(**base)


def test_zero_learning_rate_keeps_initial_params(small_data):
    data, stats = small_data
    params, hist = train(data, stats, mcfg(), TrainConfig(total_iterations=1, learning_rate=0.0))
    assert params.equals(init(mcfg()))
    assert len(hist) == 1


def test_training_is_deterministic(small_data, tmp_path):
    data, stats = small_data
    cfg = TrainConfig(total_iterations=50, learning_rate=0.01, seed=4)
    p1, h1 = train(data, stats, mcfg(hidden_dim=3), cfg)
    p2, h2 = train(data, stats, mcfg(hidden_dim=3), cfg)
    assert p1.equals(p2)
    h1.to_csv(tmp_path / "a.csv")
    h2.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_history_lambda_matches_schedule(small_data):
    data, stats = small_data
    sched = LambdaSchedule(T=10, lambda_max=0.8)
    _, hist = train(data, stats, mcfg(), TrainConfig(total_iterations=35, schedule=sched, learning_rate=0.01))
    assert [r.t for r in hist.rows] == list(range(1, 36))
    expected = [0.8 if t <= 10 else (max((20 - t) / 10 * (0.8 - 0.2), 0.2) if t <= 20 else 0.2)
                for t in range(1, 36)]
    assert hist.column("lambda") == pytest.approx(expected, abs=1e-12)


def test_history_csv_round_trip(small_data, tmp_path):
    data, stats = small_data
    _, hist = train(data, stats, mcfg(), TrainConfig(total_iterations=5, env_subset=frozenset({E.NORMAL})))
    hist.to_csv(tmp_path / "h.csv")
    header = (tmp_path / "h.csv").read_text().splitlines()[0]
    assert header == "t,lambda,risk_norm,risk_bal,risk_over,pen_norm,pen_bal,pen_over,hybrid"
    back = TrainHistory.from_csv(tmp_path / "h.csv")
    assert back.rows == hist.rows
    assert back.column("risk_bal") == [None] * 5


def _hand_step_gradient(W, b, batches, lam, penalty_weight):
    """Hybrid gradient for a linear model written out with scalar loops."""
    C, d = len(W), len(W[0])
    gW = [[0.0] * d for _ in range(C)]
    gb = [0.0] * C
    coef = {E.NORMAL: lam, E.OVER_BALANCED: 1 - lam, E.BALANCED: 1.0}
    for env, (xs, ys) in batches.items():
        B = len(ys)
        dl = [[0.0] * C for _ in range(B)]
        D = 0.0
        dD = [[0.0] * C for _ in range(B)]
        for n, (x, y) in enumerate(zip(xs, ys)):
            s = [b[c] + sum(W[c][j] * x[j] for j in range(d)) for c in range(C)]
            p = naive_softmax(s)
            es = sum(pk * sk for pk, sk in zip(p, s))
            D += (es - s[y]) / B
            for c in range(C):
                dl[n][c] = (p[c] - (c == y)) / B
                dD[n][c] = (p[c] * (1 + s[c] - es) - (c == y)) / B
        for n, x in enumerate(xs):
            for c in range(C):
                g = coef[env] * (dl[n][c] + penalty_weight * 2 * D * dD[n][c])
                gb[c] += g
                for j in range(d):
                    gW[c][j] += g * x[j]
    return gW, gb


def test_single_step_matches_hand_gradient():
    # one instance per class: median 1, every rate and weight is 1
    data = [RelationInstance(0, 0, 0, 0, (1.0, -0.5)), RelationInstance(0, 1, 1, 1, (0.25, 2.0))]
    stats = compute_stats(data)
    mc = ModelConfig(feature_dim=2, num_predicates=2, init_scale=0.7, seed=3)
    tc = TrainConfig(total_iterations=1, batch_size=3, learning_rate=0.05, momentum=0.0, seed=11)
    params, _ = train(data, stats, mc, tc)

    p0 = init(mc)
    arrays = to_arrays(data)
    sampler = EnvironmentSampler(arrays.predicates, sampling_rates(stats))
    rng = np.random.default_rng(11)
    batches = {}
    for env in ALL_ENVIRONMENTS:
        idx = sampler.sample(env, 3, rng)
        batches[env] = ([data[i].features for i in idx], [data[i].predicate_class for i in idx])
    gW, gb = _hand_step_gradient(p0.W.tolist(), p0.b.tolist(), batches, lambda_at(tc.schedule, 1), 1.0)
    np.testing.assert_allclose(params.W, p0.W - 0.05 * np.array(gW), rtol=0, atol=1e-14)
    np.testing.assert_allclose(params.b, p0.b - 0.05 * np.array(gb), rtol=0, atol=1e-14)


def test_normal_only_is_plain_momentum_sgd(small_data):
    data, stats = small_data
    tc = TrainConfig(total_iterations=20, learning_rate=0.05, momentum=0.9, penalty_weight=0.0,
                     env_subset=frozenset({E.NORMAL}), seed=6)
    params, hist = train(data, stats, mcfg(), tc)

    arrays = to_arrays(data)
    rng = np.random.default_rng(6)
    W, b = init(mcfg()).W.copy(), np.zeros(5)
    vW, vb = np.zeros_like(W), np.zeros_like(b)
    for t in range(1, 21):
        idx = rng.integers(0, len(data), size=4)
        x, y = arrays.features[idx], arrays.predicates[idx]
        rv = cross_entropy(x @ W.T + b, y)
        assert hist.rows[t - 1].hybrid == rv.value
        vW = 0.9 * vW - 0.05 * (rv.dlogits.T @ x)
        vb = 0.9 * vb - 0.05 * rv.dlogits.sum(0)
        W, b = W + vW, b + vb
    np.testing.assert_allclose(params.W, W, atol=1e-12)
    np.testing.assert_allclose(params.b, b, atol=1e-12)


@pytest.mark.parametrize("mode", list(AblationMode))
@pytest.mark.parametrize("h", [0, 4])
def test_hybrid_objective_gradient(mode, h):
    rng = np.random.default_rng(h + 17)
    mc = ModelConfig(feature_dim=3, num_predicates=4, hidden_dim=h, init_scale=1.0, seed=h)
    params = init(mc)
    params.b[:] = rng.normal(size=4)
    counts = {0: 30, 1: 12, 2: 5, 3: 2}
    plan = sampling_rates(DatasetStats(counts, 8.5, {}))
    batches = {env: (rng.normal(size=(5, 3)), rng.integers(0, 4, size=5)) for env in ALL_ENVIRONMENTS}
    _, _, grads = hybrid_objective(params, batches, plan, 0.7, mode, 1.0)
    for name, tensor in params.tensors().items():
        numeric = central_difference(lambda: hybrid_objective(params, batches, plan, 0.7, mode, 1.0)[0].value,
                                     tensor, 1e-5)
        assert_gradients_close(getattr(grads, name), numeric, rel=1e-4, abs_floor=1e-8)


def test_no_curriculum_history_has_unit_coefficients(small_data):
    data, stats = small_data
    tc = TrainConfig(total_iterations=30, learning_rate=0.01, mode=AblationMode.NO_CURRICULUM,
                     schedule=LambdaSchedule(5, 0.9))
    _, hist = train(data, stats, mcfg(), tc)
    for r in hist.rows:
        assert r.hybrid == pytest.approx(sum(r.risks[e] + r.penalties[e] for e in ALL_ENVIRONMENTS), rel=1e-12)


def test_unpenalized_environments(small_data):
    data, stats = small_data
    tc = TrainConfig(total_iterations=3, learning_rate=0.01, penalized_envs=frozenset(),
                     schedule=LambdaSchedule(10, 0.9))
    _, hist = train(data, stats, mcfg(), tc)
    for r in hist.rows:
        lam = r.lam
        assert r.hybrid == pytest.approx(lam * r.risks[E.NORMAL] + (1 - lam) * r.risks[E.OVER_BALANCED]
                                         + r.risks[E.BALANCED], rel=1e-12)


def test_converges_on_separable_data():
    cfg = GeneratorConfig(num_predicates=4, num_object_classes=5, num_scenes=100, relations_per_scene=5,
                          zipf_exponent=1.0, context_diversity={c: 1 for c in range(4)}, feature_dim=8,
                          noise_sigma=0.1, seed=1)
    data = generate_synthetic(cfg)
    stats = compute_stats(data)
    mc = ModelConfig(feature_dim=8, num_predicates=4, seed=0)
    tc = TrainConfig(total_iterations=2000, learning_rate=0.01, schedule=LambdaSchedule(500, 0.9), seed=0)
    params, _ = train(data, stats, mc, tc)
    arrays = to_arrays(data)
    risk = cross_entropy(arrays.features @ params.W.T + params.b, arrays.predicates).value
    assert risk < math.log(4) / 10


def test_non_finite_loss_reports_iteration():
    # identical features with conflicting labels: the loss cannot be driven to zero and the weights explode
    data = [RelationInstance(0, 0, 0, 0, (1e200,)), RelationInstance(0, 0, 0, 1, (1e200,))]
    tc = TrainConfig(total_iterations=10, learning_rate=1.0, seed=0)
    with pytest.raises(TrainingError, match=r"iteration \d+") as err:
        train(data, compute_stats(data), ModelConfig(1, 2, init_scale=1.0), tc)
    assert 1 <= err.value.iteration <= 10


def test_checkpoint_callback(small_data):
    data, stats = small_data
    seen = []
    train(data, stats, mcfg(), TrainConfig(total_iterations=25, checkpoint_every=10),
          on_checkpoint=lambda t, p: seen.append(t))
    assert seen == [10, 20, 25]


def test_warmup_ramps_learning_rate():
    tc = TrainConfig(learning_rate=0.1, warmup_iterations=4)
    assert [tc.learning_rate_at(t) for t in (1, 2, 4, 5, 100)] == pytest.approx([0.025, 0.05, 0.1, 0.1, 0.1])


@pytest.mark.parametrize("bad", [dict(total_iterations=0), dict(batch_size=0), dict(env_subset=frozenset())])
def test_invalid_train_config(small_data, bad):
    data, stats = small_data
    with pytest.raises(ValueError):
        train(data, stats, mcfg(), TrainConfig(**bad))
