import json
from collections import Counter
from statistics import fmean

import pytest

from opinion_audit.dataset import ambiguity, compute_adr, ingest, majority_vote
from opinion_audit.errors import DataError
from opinion_audit.quality import annotator_quality
from opinion_audit.synth import (
    AMBIGUOUS_CUE,
    ClusterSpec,
    SynthConfig,
    SynthTruth,
    expected_stats,
    generate,
    write_synth,
)


def two_clusters(f=1.0, noise=0.0, **kw):
    return SynthConfig(
        clusters=(ClusterSpec(0.8, 1, noise), ClusterSpec(0.2, 0, noise)),
        fraction_ambiguous=f, **kw,
    )


def test_single_clean_cluster_is_unanimous():
    ds, _ = generate(SynthConfig(n_samples=50, n_annotators=10, annotators_per_sample=5))
    mv = majority_vote(ds)
    assert all(s.ambiguity == 0.0 for s in mv.values())
    assert all(p.adr == 0.0 for p in compute_adr(ds, mv).values())


def test_opposed_clusters_adr():
    ds, truth = generate(two_clusters(n_samples=200, n_annotators=50, annotators_per_sample=10, seed=2))
    adr = compute_adr(ds, majority_vote(ds))
    assert fmean(adr[a].adr for a in truth.members(1)) == pytest.approx(1.0, abs=0.02)
    assert fmean(adr[a].adr for a in truth.members(0)) == pytest.approx(0.0, abs=0.02)


def test_ambiguous_fraction_is_exact():
    cfg = two_clusters(f=0.61, n_samples=300, n_annotators=20, annotators_per_sample=10, seed=1)
    ds, truth = generate(cfg)
    assert sum(truth.ambiguous.values()) == round(0.61 * 300)
    disputed = sum(1 for s in majority_vote(ds).values() if s.ambiguity > 0)
    assert disputed / 300 == 0.61


def test_text_cues():
    ds, truth = generate(two_clusters(f=0.5, n_samples=40, n_annotators=10, annotators_per_sample=5))
    for s in ds.samples:
        tokens = s.text.split()
        cue = AMBIGUOUS_CUE if truth.ambiguous[s.sample_id] else f"cue{ds.label_set.index(truth.base_label[s.sample_id])}"
        assert tokens.count(cue) == 1


def test_annotators_per_sample_and_uniqueness():
    ds, _ = generate(two_clusters(f=0.3, n_samples=100, n_annotators=30, annotators_per_sample=7, spammer_count=3))
    assert set(Counter(a.sample_id for a in ds.annotations).values()) == {7}


def test_stratified_slots():
    # 8 majority, 2 minority per sample whenever the sizes divide evenly
    ds, truth = generate(two_clusters(n_samples=100, n_annotators=50, annotators_per_sample=10))
    for anns in ds.by_sample.values():
        assert sum(truth.annotator_cluster[a.annotator_id] == 1 for a in anns) == 2


def test_demographic_quotas():
    cfg = SynthConfig(
        n_samples=20, n_annotators=40, annotators_per_sample=5,
        clusters=(ClusterSpec(0.5, 0, 0.0, {"gender": {"female": 0.75, "male": 0.25}}),
                  ClusterSpec(0.5, 1, 0.0, {"gender": {"other": 1.0}})),
    )
    ds, truth = generate(cfg)
    by_cluster = {c: Counter(ds.annotator_index[a].demographics["gender"] for a in truth.members(c)) for c in (0, 1)}
    assert by_cluster[0] == {"female": 15, "male": 5}
    assert by_cluster[1] == {"other": 20}


def test_deterministic():
    cfg = two_clusters(f=0.4, noise=0.1, n_samples=60, n_annotators=15, annotators_per_sample=5, seed=9)
    a, ta = generate(cfg)
    b, tb = generate(cfg)
    assert a.fingerprint() == b.fingerprint() and ta == tb
    c, _ = generate(SynthConfig.from_dict({**cfg.to_dict(), "seed": 10}))
    assert c.fingerprint() != a.fingerprint()


def test_config_round_trip_and_validation():
    cfg = two_clusters(f=0.4, noise=0.1, spammer_count=2)
    assert SynthConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(DataError):
        generate(SynthConfig(n_annotators=5, annotators_per_sample=10))
    with pytest.raises(DataError):
        generate(SynthConfig(clusters=(ClusterSpec(1.0, rule=5),)))


def test_write_and_reingest(tmp_path):
    ds, truth = generate(two_clusters(f=0.5, noise=0.1, n_samples=30, n_annotators=10, annotators_per_sample=4))
    paths = write_synth(ds, truth, tmp_path)
    assert ingest(paths["data"]).fingerprint() == ds.fingerprint()
    assert SynthTruth.from_dict(json.loads(paths["truth"].read_text())) == truth


# ---------------------------------------------------------------------------
# expected statistics vs generated data
# ---------------------------------------------------------------------------


def test_expected_clean_cluster():
    e = expected_stats(SynthConfig(n_annotators=10, annotators_per_sample=5), n_draws=200)
    assert e.ambiguity_mean == 0.0 and e.unanimous_fraction == 1.0


def test_expected_spammer_quality():
    cfg = SynthConfig(n_annotators=11, annotators_per_sample=11, spammer_count=1)
    assert expected_stats(cfg, n_draws=4000).quality["spammer"] == pytest.approx(0.5, abs=0.02)


def test_expected_minority_popularity():
    e = expected_stats(two_clusters(n_annotators=50, annotators_per_sample=10), n_draws=500)
    assert e.minority_popularity_disputed == pytest.approx(0.2, abs=1e-12)


def test_generated_matches_expected():
    cfg = two_clusters(f=0.5, noise=0.1, n_samples=1500, n_annotators=40, annotators_per_sample=8,
                       spammer_count=4, seed=5)
    ds, truth = generate(cfg)
    e = expected_stats(cfg, n_draws=6000)
    mv = majority_vote(ds)
    adr = compute_adr(ds, mv)
    q = annotator_quality(ds)

    def pooled(stat, members):
        # annotation-weighted, like the simulator
        num = sum(stat(a) * adr[a].n_annotations for a in members)
        return num / sum(adr[a].n_annotations for a in members)

    strata = {"cluster0": truth.members(0), "cluster1": truth.members(1), "spammer": truth.spammers}
    for name, members in strata.items():
        assert pooled(lambda a: adr[a].adr, members) == pytest.approx(e.adr[name], abs=0.03)
        assert pooled(lambda a: q[a].score, members) == pytest.approx(e.quality[name], abs=0.03)
    assert fmean(ambiguity(s) for s in mv.values()) == pytest.approx(e.ambiguity_mean, abs=0.03)
