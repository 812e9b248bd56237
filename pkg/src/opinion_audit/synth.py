"""Seeded synthetic multi-annotator datasets with planted opinion clusters and spammers.

Each sample is either *clear* (every cluster gives it the sample's base label)
or *ambiguous* (each cluster gives it the label named by the cluster's
``rule``). The pseudo-text carries one cue token: ``cue<i>`` for a clear sample
with base label index ``i``, ``murky`` for an ambiguous one, padded with
filler words. Cluster stances are therefore linearly readable from text plus
demographics.

Annotators are drawn per sample by stratified allocation: every cluster and
the spammer pool receive ``annotators_per_sample * size / n_annotators``
slots, with fractional remainders handed out at random.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import AnnotatedDataset, Annotation, Annotator, Sample
from .errors import DataError

DEFAULT_DEMOGRAPHICS = {
    "age": ("18-24", "25-34", "35-44", "45-54", "55+"),
    "gender": ("female", "male", "other"),
    "education": ("none", "secondary", "bachelor", "graduate"),
}
AMBIGUOUS_CUE = "murky"
SPAMMER = -1


@dataclass(frozen=True)
class ClusterSpec:
    """One opinion cluster.

    ``rule`` is the index into the label set this cluster assigns to ambiguous
    samples. ``demographics`` maps attribute -> {value: share}; members get
    values in exactly those proportions (largest remainder), attributes left
    out are spread evenly.
    """

    weight: float = 1.0
    rule: int = 0
    noise_rate: float = 0.0
    demographics: Mapping[str, Mapping[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "weight": self.weight,
            "rule": self.rule,
            "noise_rate": self.noise_rate,
            "demographics": {a: dict(d) for a, d in self.demographics.items()},
        }


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 200
    n_annotators: int = 50
    annotators_per_sample: int = 10
    labels: tuple[str, ...] = ("T", "NT")
    clusters: tuple[ClusterSpec, ...] = (ClusterSpec(),)
    spammer_count: int = 0
    fraction_ambiguous: float = 0.61
    demographic_vocab: Mapping[str, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_DEMOGRAPHICS)
    )
    vocab_size: int = 200
    words_per_text: tuple[int, int] = (4, 10)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "clusters", tuple(self.clusters))
        object.__setattr__(
            self, "demographic_vocab", {k: tuple(v) for k, v in self.demographic_vocab.items()}
        )
        object.__setattr__(self, "words_per_text", tuple(self.words_per_text))

    def validate(self) -> None:
        if len(self.labels) < 2:
            raise DataError("need at least two labels")
        if self.n_samples < 1 or self.n_annotators < 1 or self.annotators_per_sample < 1:
            raise DataError("sizes must be positive")
        if self.annotators_per_sample > self.n_annotators:
            raise DataError(
                f"annotators_per_sample ({self.annotators_per_sample}) exceeds "
                f"n_annotators ({self.n_annotators})"
            )
        if not 0 <= self.spammer_count < self.n_annotators:
            raise DataError("spammer_count must leave at least one cluster member")
        if not self.clusters:
            raise DataError("at least one cluster is required")
        if abs(sum(c.weight for c in self.clusters) - 1.0) > 1e-9:
            raise DataError("cluster weights must sum to 1")
        if not 0.0 <= self.fraction_ambiguous <= 1.0:
            raise DataError("fraction_ambiguous must lie in [0, 1]")
        for i, c in enumerate(self.clusters):
            if c.weight < 0 or not 0.0 <= c.noise_rate <= 1.0:
                raise DataError(f"cluster {i}: weight and noise_rate must lie in [0, 1]")
            if not 0 <= c.rule < len(self.labels):
                raise DataError(f"cluster {i}: rule {c.rule} is not a label index")
            for attr, dist in c.demographics.items():
                if attr not in self.demographic_vocab:
                    raise DataError(f"cluster {i}: unknown demographic attribute {attr!r}")
                if set(dist) - set(self.demographic_vocab[attr]):
                    raise DataError(f"cluster {i}: values outside vocabulary of {attr!r}")
                if abs(sum(dist.values()) - 1.0) > 1e-9:
                    raise DataError(f"cluster {i}: {attr!r} probabilities must sum to 1")
        if min(cluster_sizes(self)) < 1:
            raise DataError("every cluster needs at least one annotator")
        lo, hi = self.words_per_text
        if not 0 <= lo <= hi or self.vocab_size < 1:
            raise DataError("invalid text shape")

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_annotators": self.n_annotators,
            "annotators_per_sample": self.annotators_per_sample,
            "labels": list(self.labels),
            "clusters": [c.to_dict() for c in self.clusters],
            "spammer_count": self.spammer_count,
            "fraction_ambiguous": self.fraction_ambiguous,
            "demographic_vocab": {k: list(v) for k, v in self.demographic_vocab.items()},
            "vocab_size": self.vocab_size,
            "words_per_text": list(self.words_per_text),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthConfig":
        d = dict(d)
        if "clusters" in d:
            d["clusters"] = tuple(ClusterSpec(**c) for c in d["clusters"])
        for key in ("labels", "words_per_text"):
            if key in d:
                d[key] = tuple(d[key])
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown synth config keys {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class SynthTruth:
    annotator_cluster: dict[str, int]
    intended: dict[tuple[str, str], str]
    ambiguous: dict[str, bool]
    base_label: dict[str, str]

    @property
    def spammers(self) -> set[str]:
        return {a for a, c in self.annotator_cluster.items() if c == SPAMMER}

    def members(self, cluster: int) -> set[str]:
        return {a for a, c in self.annotator_cluster.items() if c == cluster}

    def to_dict(self) -> dict:
        return {
            "annotator_cluster": dict(self.annotator_cluster),
            "intended": [[s, a, lab] for (s, a), lab in self.intended.items()],
            "ambiguous": dict(self.ambiguous),
            "base_label": dict(self.base_label),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthTruth":
        return cls(
            annotator_cluster=dict(d["annotator_cluster"]),
            intended={(s, a): lab for s, a, lab in d["intended"]},
            ambiguous=dict(d["ambiguous"]),
            base_label=dict(d["base_label"]),
        )


def _largest_remainder(weights: Sequence[float], n: int) -> list[int]:
    total = float(sum(weights))
    raw = [w * n / total for w in weights]
    sizes = [int(np.floor(r)) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def cluster_sizes(config: SynthConfig) -> list[int]:
    """Largest-remainder split of the non-spammer annotators over clusters."""
    return _largest_remainder([c.weight for c in config.clusters], config.n_annotators - config.spammer_count)


def _slot_counts(strata_sizes: Sequence[int], slots: int, n_total: int, rng) -> list[int]:
    expected = np.array([slots * s / n_total for s in strata_sizes])
    counts = np.floor(expected).astype(int)
    frac = expected - counts
    rest = slots - int(counts.sum())
    if rest > 0:
        chosen = rng.choice(len(frac), size=rest, replace=False, p=frac / frac.sum())
        counts[chosen] += 1
    return counts.tolist()


def _noisy(intended: int, k: int, rate: float, rng) -> int:
    if rate > 0 and rng.random() < rate:
        other = int(rng.integers(k - 1))
        return other if other < intended else other + 1
    return intended


def generate(config: SynthConfig) -> tuple[AnnotatedDataset, SynthTruth]:
    """Build a dataset and its ground-truth side channel; fully determined by ``config``."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    k = len(config.labels)
    width = len(str(config.n_samples))
    awidth = len(str(config.n_annotators))

    # annotators: cluster membership (shuffled so ids carry no signal) and demographics
    sizes = cluster_sizes(config)
    membership = [c for c, size in enumerate(sizes) for _ in range(size)]
    membership += [SPAMMER] * config.spammer_count
    membership = [membership[i] for i in rng.permutation(len(membership))]
    cluster_of = {}
    strata: dict[int, list[str]] = {c: [] for c in range(len(sizes))}
    strata[SPAMMER] = []
    ids = [f"a{i:0{awidth}d}" for i in range(len(membership))]
    for aid, c in zip(ids, membership):
        cluster_of[aid] = c
        strata[c].append(aid)
    # demographics: exact per-cluster quotas, shuffled within the cluster
    demo: dict[str, dict[str, str]] = {aid: {} for aid in ids}
    for c in sorted(strata):
        members = strata[c]
        if not members:
            continue
        spec = config.clusters[c].demographics if c != SPAMMER else {}
        for attr, values in config.demographic_vocab.items():
            dist = spec.get(attr) or {}
            weights = [dist.get(v, 0.0) for v in values] if dist else [1.0] * len(values)
            quota = _largest_remainder(weights, len(members))
            pool = [v for v, q in zip(values, quota) for _ in range(q)]
            for aid, j in zip(members, rng.permutation(len(pool))):
                demo[aid][attr] = pool[int(j)]
    annotators = [Annotator(aid, demo[aid] or None) for aid in ids]

    # samples: which are ambiguous, base labels, pseudo-text
    n_amb = int(round(config.fraction_ambiguous * config.n_samples))
    amb_idx = set(rng.permutation(config.n_samples)[:n_amb].tolist())
    lo, hi = config.words_per_text
    samples, ambiguous, base = [], {}, {}
    for i in range(config.n_samples):
        sid = f"s{i:0{width}d}"
        b = int(rng.integers(k))
        is_amb = i in amb_idx
        cue = AMBIGUOUS_CUE if is_amb else f"cue{b}"
        words = [f"w{int(j):03d}" for j in rng.integers(config.vocab_size, size=int(rng.integers(lo, hi + 1)))]
        words.insert(int(rng.integers(len(words) + 1)), cue)
        samples.append(Sample(sid, " ".join(words)))
        ambiguous[sid] = is_amb
        base[sid] = config.labels[b]

    # annotations
    keys = list(range(len(sizes))) + [SPAMMER]
    stratum_sizes = [len(strata[c]) for c in keys]
    annotations, intended = [], {}
    for s in samples:
        sid = s.sample_id
        b = config.labels.index(base[sid])
        counts = _slot_counts(stratum_sizes, config.annotators_per_sample, config.n_annotators, rng)
        chosen = []
        for c, n_slots in zip(keys, counts):
            if n_slots:
                picks = rng.choice(len(strata[c]), size=n_slots, replace=False)
                chosen.extend(strata[c][int(p)] for p in sorted(picks))
        for aid in sorted(chosen):
            c = cluster_of[aid]
            if c == SPAMMER:
                lab = int(rng.integers(k))
                want = lab
            else:
                spec = config.clusters[c]
                want = spec.rule if ambiguous[sid] else b
                lab = _noisy(want, k, spec.noise_rate, rng)
            annotations.append(Annotation(sid, aid, config.labels[lab]))
            intended[(sid, aid)] = config.labels[want]

    dataset = AnnotatedDataset(
        label_set=config.labels,
        samples=tuple(samples),
        annotators=tuple(annotators),
        annotations=tuple(annotations),
        demographic_vocab=config.demographic_vocab,
    )
    return dataset, SynthTruth(cluster_of, intended, ambiguous, base)


# ---------------------------------------------------------------------------
# predicted statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpectedStats:
    """Annotation-weighted predictions per stratum ("cluster<i>" or "spammer")."""

    adr: dict[str, float]
    quality: dict[str, float]
    ambiguity_mean: float
    unanimous_fraction: float
    disputed_fraction: float
    minority_popularity_disputed: float | None


def expected_stats(config: SynthConfig, n_draws: int = 4000, seed: int | None = None) -> ExpectedStats:
    """Monte-Carlo prediction of the generator's disagreement statistics.

    Simulates per-sample label histograms straight from the generative rules
    (stratum slot counts, cluster stances, noise, spammers) without building a
    dataset, then evaluates MV disagreement, ambiguity and leave-one-out
    agreement on them. Noise-free single-stance configurations are exact.
    """
    config.validate()
    rng = np.random.default_rng(config.seed + 7919 if seed is None else seed)
    k = len(config.labels)
    sizes = cluster_sizes(config) + [config.spammer_count]
    names = [f"cluster{i}" for i in range(len(config.clusters))] + ["spammer"]
    n_total = config.n_annotators
    apc = config.annotators_per_sample
    expected = np.array([apc * s / n_total for s in sizes])
    minority = min(range(len(config.clusters)), key=lambda i: (config.clusters[i].weight, -i))

    disagree = Counter()
    agree_sum = Counter()
    n_ann = Counter()
    n_loo = Counter()
    amb_total = 0.0
    unanimous = 0
    disputed = 0
    pop_sum = 0.0
    pop_n = 0
    for _ in range(n_draws):
        counts = np.floor(expected).astype(int)
        rest = apc - counts.sum()
        frac = expected - counts
        while rest > 0:
            j = int(rng.choice(len(frac), p=frac / frac.sum()))
            counts[j] += 1
            frac[j] = 0.0
            rest -= 1
        is_amb = rng.random() < config.fraction_ambiguous
        b = int(rng.integers(k))
        labels = []  # (stratum, label index)
        for j, c in enumerate(counts):
            for _ in range(c):
                if j == len(config.clusters):
                    labels.append((j, int(rng.integers(k))))
                    continue
                spec = config.clusters[j]
                want = spec.rule if is_amb else b
                if spec.noise_rate and rng.random() < spec.noise_rate:
                    other = int(rng.integers(k - 1))
                    want = other if other < want else other + 1
                labels.append((j, want))
        hist = Counter(lab for _, lab in labels)
        top = max(hist.values())
        mv = min(lab for lab in range(k) if hist.get(lab, 0) == top)
        n = len(labels)
        amb_total += k * (n - top) / ((k - 1) * n)
        unanimous += top == n
        if is_amb:
            stances = {config.clusters[j].rule for j, _ in labels if j < len(config.clusters)}
            disputed += len(stances) > 1
            for j, lab in labels:
                if j == minority and len(stances) > 1:
                    pop_sum += hist[lab] / n
                    pop_n += 1
        for j, lab in labels:
            n_ann[j] += 1
            disagree[j] += lab != mv
            if n > 1:
                agree_sum[j] += (hist[lab] - 1) / (n - 1)
                n_loo[j] += 1

    adr = {names[j]: disagree[j] / n_ann[j] for j in n_ann}
    quality = {names[j]: agree_sum[j] / n_loo[j] for j in n_loo}
    return ExpectedStats(
        adr=adr,
        quality=quality,
        ambiguity_mean=amb_total / n_draws,
        unanimous_fraction=unanimous / n_draws,
        disputed_fraction=disputed / n_draws,
        minority_popularity_disputed=(pop_sum / pop_n) if pop_n else None,
    )


def write_synth(dataset: AnnotatedDataset, truth: SynthTruth, out_dir: str | Path) -> dict[str, Path]:
    """Write data.jsonl, manifest.json and truth.json into ``out_dir``."""
    from .dataset import write_jsonl, write_manifest

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "data": out / "data.jsonl",
        "manifest": out / "manifest.json",
        "truth": out / "truth.json",
    }
    write_jsonl(dataset, paths["data"])
    write_manifest(dataset.manifest, paths["manifest"])
    paths["truth"].write_text(json.dumps(truth.to_dict(), sort_keys=True) + "\n", encoding="utf-8")
    return paths
