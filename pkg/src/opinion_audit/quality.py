"""Disagreement-based annotator quality (a single-choice reduction of CrowdTruth).

With one label per annotation, the worker/unit agreement of CrowdTruth collapses
to leave-one-out label agreement: for each annotation, the share of the other
annotators on that sample who picked the same label.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .dataset import AnnotatedDataset
from .errors import DataError


@dataclass(frozen=True)
class QualityScore:
    annotator_id: str
    score: float
    n_scored_samples: int


def leave_one_out_agreement(dataset: AnnotatedDataset) -> dict[tuple[str, str], float]:
    """Per-annotation agreement keyed by (sample_id, annotator_id).

    Annotations on single-annotator samples have no peers and are omitted.
    """
    out = {}
    for sid, anns in sorted(dataset.by_sample.items()):
        n = len(anns)
        if n < 2:
            continue
        counts = Counter(a.label for a in anns)
        for a in anns:
            out[(sid, a.annotator_id)] = (counts[a.label] - 1) / (n - 1)
    return out


def annotator_quality(dataset: AnnotatedDataset) -> dict[str, QualityScore]:
    per_annotation = leave_one_out_agreement(dataset)
    scores = {}
    for aid, anns in sorted(dataset.by_annotator.items()):
        values = [per_annotation[(a.sample_id, aid)] for a in sorted(anns, key=lambda a: a.sample_id)
                  if (a.sample_id, aid) in per_annotation]
        if not values:
            continue
        scores[aid] = QualityScore(aid, math.fsum(values) / len(values), len(values))
    return scores


def filter_annotators(
    dataset: AnnotatedDataset,
    scores: dict[str, QualityScore],
    threshold: float,
) -> AnnotatedDataset:
    """Drop every annotation by annotators scoring strictly below ``threshold``.

    Annotators without a score (nobody to agree with) are kept. Raises
    :class:`DataError` if nothing would survive.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    dropped = filtered_out(scores, threshold)
    if not dropped:
        return dataset
    kept = [a for a in dataset.annotations if a.annotator_id not in dropped]
    if not kept:
        raise DataError(f"quality threshold {threshold} removes every annotator")
    return dataset.restrict(kept)


def filtered_out(scores: dict[str, QualityScore], threshold: float) -> set[str]:
    return {aid for aid, q in scores.items() if q.score < threshold}


def score_summary(scores: dict[str, QualityScore]) -> dict[str, float]:
    """Five-number summary of the score distribution, for reports."""
    values = np.array(sorted(q.score for q in scores.values()))
    if values.size == 0:
        return {}
    q25, median, q75 = np.quantile(values, [0.25, 0.5, 0.75])
    return {
        "n": int(values.size),
        "min": float(values[0]),
        "q25": float(q25),
        "median": float(median),
        "q75": float(q75),
        "max": float(values[-1]),
    }
