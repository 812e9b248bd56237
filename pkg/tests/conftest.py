import json
import random

import pytest

from opinion_audit.dataset import AnnotatedDataset, Annotation, Annotator, Sample

VOCAB = {
    "age": ("18-24", "25-34", "35-44", "45-54", "55+"),
    "gender": ("f", "m"),
    "education": ("school", "college"),
}


def make_dataset(rows, labels=("T", "NT"), demographics=None, vocab=VOCAB):
    """Build a dataset from (sample_id, annotator_id, label) triples."""
    demographics = demographics or {}
    sids = sorted({r[0] for r in rows})
    aids = sorted({r[1] for r in rows})
    return AnnotatedDataset(
        label_set=labels,
        samples=[Sample(s, f"text of {s}") for s in sids],
        annotators=[Annotator(a, demographics.get(a)) for a in aids],
        annotations=[Annotation(*r) for r in rows],
        demographic_vocab=vocab,
    )


def histogram_sample(sid, counts, prefix="a"):
    """Rows for one sample with ``counts`` = {label: n}; annotators numbered consecutively."""
    rows, i = [], 0
    for lab, n in counts.items():
        for _ in range(n):
            rows.append((sid, f"{prefix}{i}", lab))
            i += 1
    return rows


def random_mini_dataset(seed, max_samples=20, max_annotators=8, labels=("T", "NT", "X")):
    rng = random.Random(seed)
    k = rng.randint(2, len(labels))
    labs = labels[:k]
    n_s = rng.randint(1, max_samples)
    n_a = rng.randint(1, max_annotators)
    rows = []
    for s in range(n_s):
        chosen = rng.sample(range(n_a), rng.randint(1, n_a))
        for a in chosen:
            rows.append((f"s{s}", f"u{a}", rng.choice(labs)))
    return make_dataset(rows, labels=labs)


def clone_users(dataset, suffix="~c"):
    """Dataset where every annotator has an identical twin (all annotations duplicated)."""
    anns = list(dataset.annotations) + [
        Annotation(a.sample_id, a.annotator_id + suffix, a.label) for a in dataset.annotations
    ]
    annotators = list(dataset.annotators) + [
        Annotator(a.annotator_id + suffix, a.demographics) for a in dataset.annotators
    ]
    return AnnotatedDataset(dataset.label_set, dataset.samples, annotators, anns, dataset.demographic_vocab)


@pytest.fixture
def write_files(tmp_path):
    def _write(rows, manifest=None, name="data.jsonl"):
        manifest = manifest or {"labels": ["T", "NT"], "demographics": {k: list(v) for k, v in VOCAB.items()}}
        mpath = tmp_path / "manifest.json"
        mpath.write_text(json.dumps(manifest))
        dpath = tmp_path / name
        if name.endswith(".jsonl"):
            dpath.write_text("".join(json.dumps(r) + "\n" for r in rows))
        else:
            dpath.write_text(rows)
        return dpath, mpath

    return _write


# acceptance criteria report one line each in the terminal summary
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
