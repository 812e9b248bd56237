"""The three audit configurations: MV-trained, annotator-conditioned, and the lookup oracle."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataset import AnnotatedDataset, Annotation, Annotator, Sample, SampleStats, majority_vote
from .errors import EvaluationError
from .featurize import FeatureSpec, FeatureVector, demographic_entries, featurize_sample, to_csr
from .learn import LAMBDA_GRID, LRModel, TrainConfig, TuningResult, train, tune

KINDS = ("mv", "annotator", "oracle")
_ALIASES = {"mv_model": "mv", "annotator_model": "annotator", "oracle_model": "oracle"}


def normalize_kind(kind: str) -> str:
    kind = _ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    return kind


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    feature_spec: FeatureSpec = field(default_factory=FeatureSpec)
    train_config: TrainConfig = field(default_factory=TrainConfig)
    tune: bool = True
    grid: tuple[float, ...] = LAMBDA_GRID
    cv_folds: int = 5

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))
        if self.kind == "mv" and self.feature_spec.include_demographics:
            raise ValueError("the MV-trained model takes text only (include_demographics=False)")
        if self.kind == "annotator" and not self.feature_spec.include_demographics:
            raise ValueError("the annotator model needs include_demographics=True")

    @classmethod
    def for_kind(cls, kind: str, feature_spec: FeatureSpec | None = None, **kw) -> "ModelConfig":
        """Build a config, switching the demographic block on or off as the kind requires."""
        kind = normalize_kind(kind)
        spec = feature_spec or FeatureSpec()
        spec = spec.with_demographics(kind == "annotator")
        return cls(kind, spec, **kw)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "feature_spec": self.feature_spec.to_dict(),
            "train_config": self.train_config.to_dict(),
            "tune": self.tune,
            "grid": list(self.grid),
            "cv_folds": self.cv_folds,
        }


def _training_rows(
    dataset: AnnotatedDataset,
    config: ModelConfig,
    mv: Mapping[str, SampleStats] | None = None,
) -> tuple[list[tuple[FeatureVector, str]], list[str]]:
    spec = config.feature_spec
    if config.kind == "oracle":
        return [], []
    if config.kind == "mv":
        mv = mv if mv is not None else majority_vote(dataset)
        rows, groups = [], []
        for s in sorted(dataset.samples, key=lambda s: s.sample_id):
            rows.append((featurize_sample(s.text, spec), mv[s.sample_id].majority_label))
            groups.append(s.sample_id)
        return rows, groups
    text_cache: dict[str, dict[int, float]] = {}
    rows, groups = [], []
    for ann in sorted(dataset.annotations, key=lambda a: (a.sample_id, a.annotator_id)):
        text = text_cache.get(ann.sample_id)
        if text is None:
            text = dict(featurize_sample(dataset.sample_index[ann.sample_id].text, spec).entries)
            text_cache[ann.sample_id] = text
        entries = dict(text)
        entries.update(demographic_entries(dataset.annotator_index[ann.annotator_id], spec))
        rows.append((FeatureVector(entries, spec.width), ann.label))
        groups.append(ann.sample_id)
    return rows, groups


def build_training_set(
    dataset: AnnotatedDataset,
    config: ModelConfig,
    mv: Mapping[str, SampleStats] | None = None,
) -> list[tuple[FeatureVector, str]]:
    """One example per sample labelled with its MV (mv), one per annotation (annotator), none (oracle)."""
    return _training_rows(dataset, config, mv)[0]


@dataclass(eq=False)
class TrainedAuditModel:
    config: ModelConfig
    lr_model: LRModel | None = None
    oracle_table: Mapping[tuple[str, str], str] | None = None
    tuning: TuningResult | None = None

    @property
    def kind(self) -> str:
        return self.config.kind

    def _vector(self, sample: Sample, annotator: Annotator | None) -> FeatureVector:
        spec = self.config.feature_spec
        entries = dict(featurize_sample(sample.text, spec).entries)
        entries.update(demographic_entries(annotator, spec))
        return FeatureVector(entries, spec.width)

    def predict_for_user(self, sample: Sample, annotator: Annotator) -> str:
        if self.kind == "oracle":
            key = (sample.sample_id, annotator.annotator_id)
            try:
                return self.oracle_table[key]
            except KeyError:
                raise EvaluationError(
                    f"oracle has no annotation for (sample={key[0]}, annotator={key[1]})"
                ) from None
        x = self._vector(sample, annotator)
        return self.lr_model.predict_labels(to_csr([x], self.lr_model.width))[0]

    def predict_annotations(
        self, dataset: AnnotatedDataset, annotations: Sequence[Annotation]
    ) -> list[str]:
        """Vectorised :meth:`predict_for_user` over (sample, annotator) pairs of ``annotations``."""
        if not annotations:
            return []
        if self.kind == "oracle":
            return [
                self.predict_for_user(dataset.sample_index[a.sample_id], dataset.annotator_index[a.annotator_id])
                for a in annotations
            ]
        spec = self.config.feature_spec
        text_cache: dict[str, dict[int, float]] = {}
        vectors = []
        for a in annotations:
            text = text_cache.get(a.sample_id)
            if text is None:
                text = dict(featurize_sample(dataset.sample_index[a.sample_id].text, spec).entries)
                text_cache[a.sample_id] = text
            entries = dict(text)
            if spec.include_demographics:
                entries.update(demographic_entries(dataset.annotator_index[a.annotator_id], spec))
            vectors.append(FeatureVector(entries, spec.width))
        return self.lr_model.predict_labels(to_csr(vectors, self.lr_model.width))


def fit_audit_model(
    dataset: AnnotatedDataset,
    config: ModelConfig,
    eval_dataset: AnnotatedDataset | None = None,
    mv: Mapping[str, SampleStats] | None = None,
) -> TrainedAuditModel:
    """Train (and, if ``config.tune``, grid-tune with sample-grouped k-fold CV) one configuration.

    The oracle is not trained: it memorises the annotations of ``eval_dataset``.
    """
    if config.kind == "oracle":
        if eval_dataset is None:
            raise ValueError("the oracle model needs the evaluation dataset")
        return TrainedAuditModel(config, oracle_table=dict(eval_dataset.label_lookup))
    rows, groups = _training_rows(dataset, config, mv)
    train_config = config.train_config
    tuning = None
    if config.tune:
        tuning = tune(
            rows, train_config, config.grid, config.cv_folds, "accuracy",
            groups=groups, label_set=dataset.label_set,
        )
        train_config = tuning.best
    model = train(rows, train_config, dataset.label_set, spec_hash=config.feature_spec.digest())
    return TrainedAuditModel(config, lr_model=model, tuning=tuning)


# ---------------------------------------------------------------------------
# evaluation set construction
# ---------------------------------------------------------------------------


def split_samples(dataset: AnnotatedDataset, eval_fraction: float, seed: int) -> tuple[list[str], list[str]]:
    """Seeded split of sample ids into (train, eval); all annotations of a sample stay together."""
    if not 0.0 < eval_fraction < 1.0:
        raise ValueError("eval_fraction must lie strictly between 0 and 1")
    ids = sorted(s.sample_id for s in dataset.samples)
    if len(ids) < 2:
        raise ValueError("need at least two samples to split")
    perm = np.random.default_rng(seed).permutation(len(ids))
    n_eval = min(max(1, int(round(eval_fraction * len(ids)))), len(ids) - 1)
    eval_ids = sorted(ids[i] for i in perm[:n_eval])
    train_ids = sorted(ids[i] for i in perm[n_eval:])
    return train_ids, eval_ids


@dataclass(frozen=True)
class BalanceInfo:
    seed: int
    counts_before: dict[str, int]
    kept_per_label: int
    discarded: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "counts_before": dict(self.counts_before),
            "kept_per_label": self.kept_per_label,
            "discarded": dict(self.discarded),
        }


def balance_annotations(
    annotations: Sequence[Annotation], label_set: Sequence[str], seed: int
) -> tuple[list[Annotation], BalanceInfo]:
    """Downsample every label to the rarest present label's count (seeded).

    Labels absent from ``annotations`` are ignored. The survivors keep their
    (sample_id, annotator_id) order.
    """
    ordered = sorted(annotations, key=lambda a: (a.sample_id, a.annotator_id))
    by_label: dict[str, list[Annotation]] = defaultdict(list)
    for a in ordered:
        by_label[a.label].append(a)
    present = [lab for lab in label_set if by_label.get(lab)]
    counts = {lab: len(by_label.get(lab, [])) for lab in label_set}
    if not present:
        return [], BalanceInfo(seed, counts, 0, {lab: 0 for lab in label_set})
    target = min(counts[lab] for lab in present)
    rng = np.random.default_rng(seed)
    keep = set()
    for lab in label_set:
        group = by_label.get(lab, [])
        if not group:
            continue
        picks = rng.choice(len(group), size=target, replace=False) if len(group) > target else range(len(group))
        keep.update((group[i].sample_id, group[i].annotator_id) for i in picks)
    kept = [a for a in ordered if (a.sample_id, a.annotator_id) in keep]
    discarded = {lab: counts[lab] - (target if counts[lab] else 0) for lab in label_set}
    return kept, BalanceInfo(seed, counts, target, discarded)
