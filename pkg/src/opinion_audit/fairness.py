"""Grouped performance and the unfairness / general-performance scores.

Users (or annotations, or samples) are put into groups; a metric is averaged
within each group; unfairness is the population standard deviation of the
non-empty group means and general performance is their arithmetic mean.
Groups count equally regardless of size. Group means are taken in exact
rational arithmetic and rounded once, so they do not depend on member order
and repeating every member k times gives the identical float. The std and
mean over groups are computed the same way.
"""

from __future__ import annotations

import math
from fractions import Fraction
from bisect import bisect_right
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .dataset import AnnotatedDataset, Annotation, AnnotatorProfile, SampleStats
from .errors import EvaluationError
from .featurize import UNKNOWN
from .metrics import get_metric

DEFAULT_EDGES = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
BIN_KINDS = ("adr_bins", "popularity_bins", "ambiguity_bins")
KINDS = BIN_KINDS + ("demographic_partition",)
_SHORT = {"adr": "adr_bins", "popularity": "popularity_bins", "ambiguity": "ambiguity_bins"}


@dataclass(frozen=True)
class GroupingStrategy:
    kind: str = "adr_bins"
    bin_edges: tuple[float, ...] = DEFAULT_EDGES
    attribute: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "bin_edges", tuple(float(e) for e in self.bin_edges))
        if self.kind not in KINDS:
            raise EvaluationError(f"unknown grouping kind {self.kind!r}")
        if self.kind == "demographic_partition":
            if not self.attribute:
                raise EvaluationError("demographic_partition needs an attribute")
        else:
            e = self.bin_edges
            if len(e) < 2 or e[0] != 0.0 or e[-1] != 1.0 or any(b <= a for a, b in zip(e, e[1:])):
                raise EvaluationError(f"bin edges must increase strictly from 0 to 1, got {list(e)}")

    @property
    def unit(self) -> str:
        return {"popularity_bins": "annotation", "ambiguity_bins": "sample"}.get(self.kind, "user")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "bin_edges": list(self.bin_edges), "attribute": self.attribute}

    @classmethod
    def from_dict(cls, d: Mapping) -> "GroupingStrategy":
        return cls(d["kind"], tuple(d.get("bin_edges", DEFAULT_EDGES)), d.get("attribute"))


def parse_grouping(text: str, bin_edges: Sequence[float] | None = None) -> GroupingStrategy:
    """``adr`` | ``popularity`` | ``ambiguity`` | ``demographic:<attr>``."""
    edges = tuple(bin_edges) if bin_edges is not None else DEFAULT_EDGES
    if text.startswith("demographic:"):
        return GroupingStrategy("demographic_partition", edges, text.split(":", 1)[1])
    kind = _SHORT.get(text, text)
    return GroupingStrategy(kind, edges)


def bin_index(value: float, edges: Sequence[float]) -> int:
    """Right-open bins, except the last which is closed."""
    if not edges[0] <= value <= edges[-1]:
        raise EvaluationError(f"value {value} outside [{edges[0]}, {edges[-1]}]")
    return min(bisect_right(edges, value) - 1, len(edges) - 2)


def bin_label(i: int, edges: Sequence[float]) -> str:
    close = "]" if i == len(edges) - 2 else ")"
    return f"[{edges[i]:.2f}, {edges[i + 1]:.2f}{close}"


@dataclass(frozen=True)
class Group:
    group_id: str
    label: str
    members: tuple[str, ...]
    mean: float | None = None
    size: int = -1

    def __post_init__(self):
        if self.size < 0:
            object.__setattr__(self, "size", len(self.members))

    @property
    def empty(self) -> bool:
        return self.mean is None

    def to_dict(self) -> dict:
        return {
            "group_id": self.group_id,
            "label": self.label,
            "size": self.size,
            "mean": self.mean,
            "members": list(self.members),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Group":
        return cls(d["group_id"], d["label"], tuple(d["members"]), d["mean"], d["size"])


@dataclass(frozen=True)
class GroupedEvaluation:
    strategy: GroupingStrategy
    groups: tuple[Group, ...]
    metric: str | None = None
    ungrouped: tuple[str, ...] = ()

    @property
    def unit(self) -> str:
        return self.strategy.unit

    @property
    def empty_groups(self) -> list[str]:
        return [g.group_id for g in self.groups if g.empty]

    @property
    def non_empty(self) -> list[Group]:
        return [g for g in self.groups if not g.empty]

    def layout(self) -> tuple:
        """Group ids with their members; two evaluations share a grouping iff layouts match."""
        return (self.strategy, tuple((g.group_id, g.members) for g in self.groups))

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.to_dict(),
            "unit": self.unit,
            "metric": self.metric,
            "groups": [g.to_dict() for g in self.groups],
            "empty_groups": self.empty_groups,
            "ungrouped": list(self.ungrouped),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GroupedEvaluation":
        return cls(
            GroupingStrategy.from_dict(d["strategy"]),
            tuple(Group.from_dict(g) for g in d["groups"]),
            d.get("metric"),
            tuple(d.get("ungrouped", ())),
        )


@dataclass(frozen=True)
class PerUserPerformance:
    annotator_id: str
    metrics: Mapping[str, float]
    n_eval_annotations: int


@dataclass(frozen=True)
class AuditScore:
    unfairness: float
    general_performance: float
    metrics: tuple[str, ...]
    per_metric: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    empty_groups: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "unfairness": self.unfairness,
            "general_performance": self.general_performance,
            "metrics": list(self.metrics),
            "per_metric": {
                m: {"unfairness": u, "general_performance": p} for m, (u, p) in self.per_metric.items()
            },
            "empty_groups": list(self.empty_groups),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AuditScore":
        return cls(
            d["unfairness"],
            d["general_performance"],
            tuple(d["metrics"]),
            {m: (v["unfairness"], v["general_performance"]) for m, v in d.get("per_metric", {}).items()},
            tuple(d.get("empty_groups", ())),
        )


# ---------------------------------------------------------------------------
# per-user performance
# ---------------------------------------------------------------------------


def user_performance_from_predictions(
    annotations: Sequence[Annotation],
    predictions: Sequence[str],
    metrics: Sequence[str] = ("accuracy",),
    min_support: int = 3,
) -> tuple[dict[str, PerUserPerformance], list[str]]:
    """Score each user's predictions against that user's own labels.

    Returns the scored users and the sorted ids of users with fewer than
    ``min_support`` evaluation annotations (excluded).
    """
    if len(annotations) != len(predictions):
        raise ValueError("annotations and predictions differ in length")
    truth: dict[str, list[str]] = defaultdict(list)
    pred: dict[str, list[str]] = defaultdict(list)
    for a, p in zip(annotations, predictions):
        truth[a.annotator_id].append(a.label)
        pred[a.annotator_id].append(p)
    fns = {m: get_metric(m) for m in metrics}
    out, excluded = {}, []
    for aid in sorted(truth):
        if len(truth[aid]) < min_support:
            excluded.append(aid)
            continue
        out[aid] = PerUserPerformance(
            aid, {m: fn(truth[aid], pred[aid]) for m, fn in fns.items()}, len(truth[aid])
        )
    return out, excluded


def per_user_performance(
    model,
    dataset: AnnotatedDataset,
    eval_annotations: Sequence[Annotation],
    metrics: Sequence[str] = ("accuracy",),
    min_support: int = 3,
) -> tuple[dict[str, PerUserPerformance], list[str]]:
    """Predict every evaluation annotation with ``model`` and score per user."""
    preds = model.predict_annotations(dataset, eval_annotations)
    return user_performance_from_predictions(eval_annotations, preds, metrics, min_support)


# ---------------------------------------------------------------------------
# grouping
# ---------------------------------------------------------------------------


def group_users(
    profiles: Mapping[str, AnnotatorProfile],
    strategy: GroupingStrategy,
    dataset: AnnotatedDataset | None = None,
) -> GroupedEvaluation:
    """Assign users to groups (no means yet).

    ``profiles`` must come from training-split annotations. Demographic
    partitions read the vocabulary and records from ``dataset`` and add an
    ``unknown`` group for users without a value.
    """
    members: dict[int, list[str]] = defaultdict(list)
    if strategy.kind == "adr_bins":
        edges = strategy.bin_edges
        for aid, prof in profiles.items():
            members[bin_index(prof.adr, edges)].append(aid)
        groups = tuple(
            Group(f"adr{i}", f"ADR {bin_label(i, edges)}", tuple(sorted(members[i])))
            for i in range(len(edges) - 1)
        )
    elif strategy.kind == "demographic_partition":
        if dataset is None:
            raise EvaluationError("demographic grouping needs the dataset for vocabularies")
        attr = strategy.attribute
        if attr not in dataset.demographic_vocab:
            raise EvaluationError(f"attribute {attr!r} is not declared in the manifest")
        values = list(dataset.demographic_vocab[attr]) + [UNKNOWN]
        by_value: dict[str, list[str]] = defaultdict(list)
        for aid in profiles:
            ann = dataset.annotator_index.get(aid)
            demo = (ann.demographics if ann is not None else None) or {}
            by_value[demo.get(attr, UNKNOWN)].append(aid)
        groups = tuple(
            Group(f"{attr}={v}", f"{attr}: {v}", tuple(sorted(by_value[v]))) for v in values
        )
    else:
        raise EvaluationError(f"{strategy.kind} groups annotations or samples, not users")
    return GroupedEvaluation(strategy, groups)


def aggregate(
    skeleton: GroupedEvaluation,
    performance: Mapping[str, PerUserPerformance],
    metric: str = "accuracy",
) -> GroupedEvaluation:
    """Fill in group means from per-user values; members without a score are dropped.

    Evaluated users missing from every group are reported in ``ungrouped``.
    """
    placed = set()
    groups = []
    for g in skeleton.groups:
        scored = tuple(m for m in g.members if m in performance)
        placed.update(scored)
        mean = exact_mean([performance[m].metrics[metric] for m in scored]) if scored else None
        groups.append(Group(g.group_id, g.label, scored, mean))
    ungrouped = tuple(sorted(set(performance) - placed))
    return GroupedEvaluation(skeleton.strategy, tuple(groups), metric, ungrouped)


# ---------------------------------------------------------------------------
# scores
# ---------------------------------------------------------------------------


def exact_mean(values: Sequence[float]) -> float:
    """Arithmetic mean rounded once from the exact rational value."""
    return float(sum(map(Fraction, values), Fraction(0)) / len(values))


def _std_mean(values: Sequence[float]) -> tuple[float, float]:
    exact = [Fraction(v) for v in values]
    mean = sum(exact, Fraction(0)) / len(exact)
    var = sum(((v - mean) ** 2 for v in exact), Fraction(0)) / len(exact)
    return math.sqrt(float(var)), float(mean)


def unfairness_score(grouped: GroupedEvaluation) -> AuditScore:
    """Population std (unfairness) and mean (general performance) of non-empty group means."""
    means = [g.mean for g in grouped.non_empty]
    if len(means) < 2:
        raise EvaluationError(
            f"unfairness needs at least 2 non-empty groups, got {len(means)} "
            f"(empty: {grouped.empty_groups})"
        )
    std, mean = _std_mean(means)
    metric = grouped.metric or "metric"
    return AuditScore(std, mean, (metric,), {metric: (std, mean)}, tuple(grouped.empty_groups))


def multi_metric_score(evaluations: Sequence[GroupedEvaluation]) -> AuditScore:
    """Average the per-metric unfairness and performance values over several metrics."""
    if not evaluations:
        raise EvaluationError("no evaluations to combine")
    layout = evaluations[0].layout()
    for ev in evaluations[1:]:
        if ev.layout() != layout:
            raise EvaluationError("evaluations use different groupings")
    per = {}
    empty: set[str] = set()
    for ev in evaluations:
        s = unfairness_score(ev)
        per[ev.metric or f"metric{len(per)}"] = (s.unfairness, s.general_performance)
        empty.update(s.empty_groups)
    if len(per) == 1:
        ((m, (u, p)),) = per.items()
        return AuditScore(u, p, (m,), per, tuple(sorted(empty)))
    u = math.fsum(v[0] for v in per.values()) / len(per)
    p = math.fsum(v[1] for v in per.values()) / len(per)
    return AuditScore(u, p, tuple(per), per, tuple(sorted(empty)))


# ---------------------------------------------------------------------------
# annotation- and sample-level breakdowns
# ---------------------------------------------------------------------------


def _pooled(
    strategy: GroupingStrategy,
    keyed: Mapping[int, list[tuple[str, str, str]]],
    labels: Mapping[int, tuple[str, str]],
    metric: str,
) -> GroupedEvaluation:
    fn = get_metric(metric)
    groups = []
    for i in range(len(strategy.bin_edges) - 1):
        rows = keyed.get(i, [])
        gid, label = labels[i]
        mean = fn([t for _, t, _ in rows], [p for _, _, p in rows]) if rows else None
        groups.append(Group(gid, label, tuple(sorted({k for k, _, _ in rows})), mean))
    return GroupedEvaluation(strategy, tuple(groups), metric)


def annotation_level_breakdown(
    annotations: Sequence[Annotation],
    predictions: Sequence[str],
    eval_stats: Mapping[str, SampleStats],
    bin_edges: Sequence[float] = DEFAULT_EDGES,
    metric: str = "accuracy",
) -> GroupedEvaluation:
    """Metric per popularity bin, pooling the annotations that fall in each bin.

    Popularity comes from ``eval_stats`` (histograms of the evaluation split).
    Members are ``"<sample_id>|<annotator_id>"`` keys.
    """
    strategy = GroupingStrategy("popularity_bins", tuple(bin_edges))
    edges = strategy.bin_edges
    keyed: dict[int, list] = defaultdict(list)
    for a, p in zip(annotations, predictions):
        st = eval_stats[a.sample_id]
        pop = st.label_histogram[a.label] / st.n_annotations
        keyed[bin_index(pop, edges)].append((f"{a.sample_id}|{a.annotator_id}", a.label, p))
    labels = {i: (f"pop{i}", f"popularity {bin_label(i, edges)}") for i in range(len(edges) - 1)}
    return _pooled(strategy, keyed, labels, metric)


def sample_level_breakdown(
    annotations: Sequence[Annotation],
    predictions: Sequence[str],
    eval_stats: Mapping[str, SampleStats],
    bin_edges: Sequence[float] = DEFAULT_EDGES,
    metric: str = "accuracy",
) -> GroupedEvaluation:
    """Metric per ambiguity bin, pooling all evaluation annotations of the samples in each bin."""
    strategy = GroupingStrategy("ambiguity_bins", tuple(bin_edges))
    edges = strategy.bin_edges
    keyed: dict[int, list] = defaultdict(list)
    for a, p in zip(annotations, predictions):
        keyed[bin_index(eval_stats[a.sample_id].ambiguity, edges)].append((a.sample_id, a.label, p))
    labels = {i: (f"amb{i}", f"ambiguity {bin_label(i, edges)}") for i in range(len(edges) - 1)}
    return _pooled(strategy, keyed, labels, metric)


def drop_members(grouped: GroupedEvaluation) -> GroupedEvaluation:
    """Copy without member lists (keeps reports of annotation-level breakdowns small)."""
    return replace(grouped, groups=tuple(replace(g, members=()) for g in grouped.groups))
