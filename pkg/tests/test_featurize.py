import hashlib
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opinion_audit.dataset import Annotator
from opinion_audit.featurize import (
    FeatureSpec,
    FeatureVector,
    collision_rate,
    demographic_entries,
    featurize_pair,
    featurize_sample,
    to_csr,
    token_bucket,
    tokenize,
)

VOCAB = {"age": ("18-24", "25-34", "35-44", "45-54", "55+"), "gender": ("f", "m")}


def test_tokenize():
    assert tokenize("What shit u talk") == ["what", "shit", "u", "talk"]
    assert tokenize("") == []
    assert tokenize("re-frame!!") == ["re", "frame"]
    assert tokenize("snake_case") == ["snake", "case"]


def test_bucket_matches_keyed_blake2b():
    spec = FeatureSpec(2**10, hash_seed=7)
    key = (7).to_bytes(8, "little", signed=True)
    for tok in ["a", "murky", "üniçode"]:
        digest = hashlib.blake2b(tok.encode(), digest_size=8, key=key).digest()
        assert token_bucket(tok, spec) == int.from_bytes(digest, "little") % 2**10


def test_bucket_count_must_be_power_of_two():
    with pytest.raises(ValueError):
        FeatureSpec(1000)


def test_deterministic():
    spec = FeatureSpec(2**12)
    assert featurize_sample("same text here", spec) == featurize_sample("same text here", spec)


def test_single_token():
    v = featurize_sample("hello", FeatureSpec(2**12))
    assert list(v.entries.values()) == [1.0]


def test_counts_are_l2_normalised():
    spec = FeatureSpec(2**16)
    assert token_bucket("a", spec) != token_bucket("b", spec)
    v = featurize_sample("a b a", spec)
    assert v.entries[token_bucket("a", spec)] == pytest.approx(2 / math.sqrt(5), abs=1e-15)
    assert v.entries[token_bucket("b", spec)] == pytest.approx(1 / math.sqrt(5), abs=1e-15)


def test_empty_text_gives_empty_vector():
    assert featurize_sample("!!", FeatureSpec(2**8)).entries == {}


def test_pair_without_demographics_equals_sample():
    spec = FeatureSpec(2**12, VOCAB, include_demographics=False)
    ann = Annotator("a", {"age": "35-44"})
    assert featurize_pair("x y", ann, spec) == featurize_sample("x y", spec)


def test_demographic_one_hot():
    spec = FeatureSpec(2**8, VOCAB, include_demographics=True)
    offsets = spec.attribute_offsets()
    e = demographic_entries(Annotator("a", {"age": "35-44", "gender": "m"}), spec)
    age_block = [i - offsets["age"] for i in e if offsets["age"] <= i < offsets["age"] + 6]
    assert age_block == [2]
    assert e[offsets["gender"] + 1] == 1.0
    assert spec.width == 2**8 + 6 + 3


def test_unknown_slot_when_record_missing():
    spec = FeatureSpec(2**8, VOCAB, include_demographics=True)
    offsets = spec.attribute_offsets()
    e = demographic_entries(Annotator("a"), spec)
    assert e == {offsets["age"] + 5: 1.0, offsets["gender"] + 2: 1.0}
    partial = demographic_entries(Annotator("b", {"gender": "f"}), spec)
    assert partial == {offsets["age"] + 5: 1.0, offsets["gender"]: 1.0}


def test_vector_rejects_out_of_range():
    with pytest.raises(ValueError):
        FeatureVector({10: 1.0}, 10)


def test_to_csr_matches_dense():
    spec = FeatureSpec(2**6, VOCAB, include_demographics=True)
    vs = [featurize_pair("a b", Annotator("x", {"age": "55+"}), spec), featurize_pair("c", None, spec)]
    dense = np.vstack([v.to_dense() for v in vs])
    np.testing.assert_array_equal(to_csr(vs).toarray(), dense)


def test_spec_round_trip_and_digest():
    spec = FeatureSpec(2**10, VOCAB, include_demographics=True, hash_seed=3)
    assert FeatureSpec.from_dict(spec.to_dict()) == spec
    assert spec.digest() != spec.with_demographics(False).digest()


def test_collision_rate_small_for_wide_tables():
    words = [f"w{i}" for i in range(500)]
    assert collision_rate(words, FeatureSpec(2**18)) < 0.01
    assert collision_rate(words, FeatureSpec(2**4)) == 1.0


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=60))
def test_text_block_has_unit_norm(text):
    v = featurize_sample(text, FeatureSpec(2**10))
    if v.entries:
        assert math.fsum(w * w for w in v.entries.values()) == pytest.approx(1.0, abs=1e-12)
    else:
        assert tokenize(text) == []
