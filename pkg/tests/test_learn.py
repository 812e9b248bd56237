import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opinion_audit.errors import TrainingError
from opinion_audit.featurize import FeatureSpec, FeatureVector, featurize_sample, to_csr
from opinion_audit.learn import (
    LRModel,
    TrainConfig,
    cross_validate,
    grad_check,
    loss_and_grad,
    make_folds,
    predict,
    train,
    tune,
)

LABELS = ("T", "NT")


def vec(entries, width=4):
    return FeatureVector(entries, width)


def blobs(n, seed, width=16, k=2, sep=1.5):
    """Gaussian blobs over a few dense columns, as FeatureVector examples."""
    rng = np.random.default_rng(seed)
    labels = tuple(f"L{i}" for i in range(k))
    centers = rng.normal(0, sep, size=(k, width))
    out = []
    for i in range(n):
        c = i % k
        x = centers[c] + rng.normal(0, 1, size=width)
        out.append((FeatureVector({j: float(v) for j, v in enumerate(x)}, width), labels[c]))
    return out, labels


def test_separable_pair():
    ex = [(vec({0: 1.0}), "T"), (vec({0: -1.0}), "NT")]
    model = train(ex, TrainConfig(l2_lambda=1e-4, max_epochs=200, batch_size=2), LABELS)
    assert model.predict_labels(to_csr([x for x, _ in ex])) == ["T", "NT"]


def test_absent_class_is_rejected():
    ex = [(vec({0: 1.0}), "T"), (vec({1: 1.0}), "T")]
    with pytest.raises(TrainingError):
        train(ex, TrainConfig(l2_lambda=1e-3), LABELS)


def test_loss_trace_non_increasing():
    ex, labels = blobs(200, seed=3)
    model = train(ex, TrainConfig(l2_lambda=1e-4, max_epochs=60), labels)
    trace = np.array(model.loss_trace)
    assert len(trace) > 1
    assert np.all(np.diff(trace) <= 1e-9)


def test_zero_model_is_uniform():
    m = LRModel(np.zeros((2, 4)), np.zeros(2), LABELS)
    label, probs = predict(m, vec({1: 3.0}))
    assert label == "T"
    assert probs == {"T": 0.5, "NT": 0.5}


def test_saturation():
    W = np.zeros((2, 4))
    W[0, 0] = 50.0
    label, probs = predict(LRModel(W, np.zeros(2), LABELS), vec({0: 1.0}))
    assert label == "T" and probs["T"] > 0.999


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_probabilities_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 5))
    m = LRModel(rng.normal(0, 5, size=(k, 8)), rng.normal(0, 5, size=k), tuple(map(str, range(k))))
    X = rng.normal(0, 3, size=(34, 8))  # 30 examples x 34 rows ~ 1000 draws
    np.testing.assert_allclose(m.predict_proba(X).sum(axis=1), 1.0, atol=1e-12)


def test_single_example_gradient_is_p_minus_y_times_x():
    x = 0.7
    X = to_csr([vec({0: x}, 1)], 1)
    W = np.array([[0.3, -0.2]])
    b = np.zeros(2)
    _, gW, gb = loss_and_grad(W, b, X, np.array([0]), 0.0)
    z = np.array([0.3 * x, -0.2 * x])
    p = np.exp(z) / np.exp(z).sum()
    np.testing.assert_allclose(gW[0], (p - np.array([1.0, 0.0])) * x, atol=1e-15)
    np.testing.assert_allclose(gb, p - np.array([1.0, 0.0]), atol=1e-15)


@pytest.mark.parametrize("lam", [0.0, 1e-2])
@pytest.mark.parametrize("seed", range(5))
def test_grad_check(seed, lam):
    ex, labels = blobs(40, seed, width=6, k=2 + seed % 3)
    rng = np.random.default_rng(seed)
    m = LRModel(rng.normal(0, 0.5, size=(len(labels), 6)), rng.normal(0, 0.5, size=len(labels)), labels)
    assert grad_check(m, ex, l2_lambda=lam) < 1e-5


def test_training_is_deterministic():
    ex, labels = blobs(150, seed=1, k=3)
    a = train(ex, TrainConfig(seed=5, max_epochs=20), labels)
    b = train(ex, TrainConfig(seed=5, max_epochs=20), labels)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)
    c = train(ex, TrainConfig(seed=6, max_epochs=20), labels)
    assert not np.array_equal(a.weights, c.weights)


def test_model_round_trip_is_exact():
    ex, labels = blobs(60, seed=2)
    m = train(ex, TrainConfig(max_epochs=10), labels, spec_hash="abc")
    back = LRModel.from_dict(json.loads(json.dumps(m.to_dict())))
    assert np.array_equal(back.weights, m.weights) and np.array_equal(back.bias, m.bias)
    assert back.label_set == m.label_set and back.spec_hash == "abc"


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(l2_lambda=-1)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)


# ---------------------------------------------------------------------------
# folds, CV, tuning
# ---------------------------------------------------------------------------


def test_fold_sizes():
    plan = make_folds(10, 5, seed=0)
    assert [len(f) for f in plan.folds] == [2] * 5
    plan = make_folds(11, 5, seed=0)
    assert sorted(len(f) for f in plan.folds) == [2, 2, 2, 2, 3]
    plan.check(11)


def test_folds_deterministic():
    assert make_folds(37, 5, 9) == make_folds(37, 5, 9)
    assert make_folds(37, 5, 9) != make_folds(37, 5, 10)


@settings(max_examples=50, deadline=None)
@given(st.integers(5, 400), st.integers(2, 5), st.integers(0, 1000))
def test_folds_partition(n, k, seed):
    make_folds(n, k, seed).check(n)


def test_cv_perfect_on_predictable_data():
    spec = FeatureSpec(2**8)
    ex = [(featurize_sample(f"cue{i % 2} filler", spec), LABELS[i % 2]) for i in range(60)]
    res = cross_validate(ex, TrainConfig(max_epochs=50), k=5, label_set=LABELS)
    assert res.fold_scores == (1.0,) * 5


def test_cv_chance_on_unrelated_labels():
    rng = np.random.default_rng(0)
    spec = FeatureSpec(2**10)
    labels = np.array(["T"] * 1000 + ["NT"] * 1000)
    rng.shuffle(labels)
    ex = [
        (featurize_sample(" ".join(f"w{j}" for j in rng.integers(300, size=6)), spec), str(lab))
        for lab in labels
    ]
    res = cross_validate(ex, TrainConfig(max_epochs=20), k=5, label_set=LABELS)
    assert abs(res.mean - 0.5) <= 0.05


def test_group_folds_keep_groups_together():
    spec = FeatureSpec(2**8)
    ex, groups = [], []
    for s in range(20):
        for a in range(3):
            ex.append((featurize_sample(f"cue{s % 2} a{a}", spec), LABELS[s % 2]))
            groups.append(f"s{s}")
    res = cross_validate(ex, TrainConfig(max_epochs=20), k=5, groups=groups, label_set=LABELS)
    assert sorted(len(f) for f in res.plan.folds) == [4] * 5


def test_tune_first_best_wins():
    spec = FeatureSpec(2**8)
    ex = [(featurize_sample(f"cue{i % 2}", spec), LABELS[i % 2]) for i in range(40)]
    res = tune(ex, TrainConfig(max_epochs=30), grid=(1e-2, 1e-3, 1e-4), label_set=LABELS)
    assert all(r.mean == 1.0 for r in res.table.values())
    assert res.best.l2_lambda == 1e-2
