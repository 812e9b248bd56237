from collections import Counter

import pytest

from opinion_audit.dataset import Annotation, Annotator
from opinion_audit.errors import EvaluationError
from opinion_audit.featurize import FeatureSpec
from opinion_audit.learn import TrainConfig
from opinion_audit.models import (
    ModelConfig,
    balance_annotations,
    build_training_set,
    fit_audit_model,
    normalize_kind,
    split_samples,
)
from opinion_audit.synth import ClusterSpec, SynthConfig, generate

from conftest import histogram_sample, make_dataset

SPEC = FeatureSpec(2**10)
FAST = TrainConfig(max_epochs=20)


@pytest.fixture(scope="module")
def synth():
    cfg = SynthConfig(
        n_samples=100, n_annotators=20, annotators_per_sample=10, fraction_ambiguous=0.5, seed=3,
        clusters=(ClusterSpec(0.8, 1, 0.05, {"gender": {"female": 0.5, "male": 0.5}}),
                  ClusterSpec(0.2, 0, 0.05, {"gender": {"other": 1.0}})),
    )
    return generate(cfg)


def test_kind_aliases():
    assert normalize_kind("mv_model") == "mv"
    with pytest.raises(ValueError):
        normalize_kind("svm")


def test_demographic_switch_follows_kind():
    spec = FeatureSpec(2**8, {"gender": ("f", "m")})
    assert not ModelConfig.for_kind("mv", spec.with_demographics(True)).feature_spec.include_demographics
    assert ModelConfig.for_kind("annotator", spec).feature_spec.include_demographics
    with pytest.raises(ValueError):
        ModelConfig("mv", spec.with_demographics(True))


def test_training_set_sizes(synth):
    ds, _ = synth
    assert len(build_training_set(ds, ModelConfig.for_kind("mv", SPEC))) == 100
    assert len(build_training_set(ds, ModelConfig.for_kind("annotator", SPEC))) == 1000
    assert build_training_set(ds, ModelConfig.for_kind("oracle", SPEC)) == []


def test_mv_training_label():
    ds = make_dataset(histogram_sample("s1", {"T": 2, "NT": 8}) + [("s2", "a0", "T"), ("s2", "a1", "T")])
    rows = build_training_set(ds, ModelConfig.for_kind("mv", SPEC))
    assert [lab for _, lab in rows] == ["NT", "T"]


def test_oracle_returns_recorded_label(synth):
    ds, _ = synth
    model = fit_audit_model(ds, ModelConfig.for_kind("oracle", SPEC), eval_dataset=ds)
    for a in ds.annotations[:50]:
        assert model.predict_for_user(ds.sample_index[a.sample_id], ds.annotator_index[a.annotator_id]) == a.label
    with pytest.raises(EvaluationError):
        model.predict_for_user(ds.samples[0], Annotator("nobody"))


def test_mv_model_ignores_the_user(synth):
    ds, _ = synth
    model = fit_audit_model(ds, ModelConfig.for_kind("mv", SPEC, train_config=FAST, tune=False))
    anns = ds.by_sample[ds.samples[0].sample_id]
    preds = model.predict_annotations(ds, anns)
    assert len(set(preds)) == 1


def test_annotator_model_same_demographics_same_prediction(synth):
    ds, _ = synth
    model = fit_audit_model(ds, ModelConfig.for_kind("annotator", FeatureSpec(2**10, ds.demographic_vocab),
                                                     train_config=FAST, tune=False))
    s = ds.samples[0]
    demo = {"age": "25-34", "gender": "other", "education": "college"}
    assert model.predict_for_user(s, Annotator("x", demo)) == model.predict_for_user(s, Annotator("y", demo))


def test_annotator_model_learns_the_minority_stance(synth):
    ds, truth = synth
    spec = FeatureSpec(2**10, ds.demographic_vocab)
    model = fit_audit_model(ds, ModelConfig.for_kind("annotator", spec, train_config=TrainConfig(max_epochs=60), tune=False))
    amb = next(s for s in ds.samples if truth.ambiguous[s.sample_id])
    minority = next(iter(truth.members(1)))
    majority = next(iter(truth.members(0)))
    got = {model.predict_for_user(amb, ds.annotator_index[a]) for a in (minority, majority)}
    assert got == {"T", "NT"}


def test_vectorised_matches_single(synth):
    ds, _ = synth
    spec = FeatureSpec(2**10, ds.demographic_vocab)
    model = fit_audit_model(ds, ModelConfig.for_kind("annotator", spec, train_config=FAST, tune=False))
    anns = ds.annotations[:40]
    single = [model.predict_for_user(ds.sample_index[a.sample_id], ds.annotator_index[a.annotator_id]) for a in anns]
    assert model.predict_annotations(ds, anns) == single


def test_tuning_recorded(synth):
    ds, _ = synth
    model = fit_audit_model(ds, ModelConfig.for_kind("mv", SPEC, train_config=FAST, grid=(1e-2, 1e-4)))
    assert set(model.tuning.table) == {1e-2, 1e-4}
    assert model.tuning.best.l2_lambda in (1e-2, 1e-4)


def test_split_is_seeded_and_disjoint(synth):
    ds, _ = synth
    tr, ev = split_samples(ds, 0.2, seed=1)
    assert len(ev) == 20 and not set(tr) & set(ev)
    assert split_samples(ds, 0.2, seed=1) == (tr, ev)
    assert split_samples(ds, 0.2, seed=2) != (tr, ev)
    with pytest.raises(ValueError):
        split_samples(ds, 1.0, seed=1)


def test_balance():
    anns = [Annotation(f"s{i}", "u", "NT") for i in range(10)] + [Annotation(f"s{i}", "v", "T") for i in range(3)]
    kept, info = balance_annotations(anns, ("T", "NT"), seed=0)
    assert Counter(a.label for a in kept) == {"T": 3, "NT": 3}
    assert info.discarded == {"T": 0, "NT": 7}
    again, _ = balance_annotations(list(reversed(anns)), ("T", "NT"), seed=0)
    assert again == kept
