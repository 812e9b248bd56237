"""Multi-annotator datasets: domain types, strict ingestion, disagreement statistics.

Every statistic here is a pure function of an immutable :class:`AnnotatedDataset`.
Ratios are computed as a single division of two integers so that duplicating
every annotation leaves them bit-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ParseError, SchemaError

REQUIRED_COLUMNS = ("sample_id", "text", "annotator_id", "label")


@dataclass(frozen=True)
class Sample:
    sample_id: str
    text: str


@dataclass(frozen=True)
class Annotator:
    annotator_id: str
    demographics: Mapping[str, str] | None = None


@dataclass(frozen=True)
class Annotation:
    sample_id: str
    annotator_id: str
    label: str


@dataclass(frozen=True)
class Manifest:
    labels: tuple[str, ...]
    demographics: dict[str, tuple[str, ...]] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: Mapping) -> "Manifest":
        if not isinstance(raw, Mapping):
            raise SchemaError("manifest must be a JSON object")
        labels = raw.get("labels")
        if not isinstance(labels, list) or not labels:
            raise SchemaError("manifest must declare a non-empty 'labels' list (empty label set)")
        demo = raw.get("demographics") or {}
        if not isinstance(demo, Mapping):
            raise SchemaError("manifest 'demographics' must map attribute -> value list")
        return cls(
            labels=tuple(str(x) for x in labels),
            demographics={str(k): tuple(str(v) for v in vals) for k, vals in demo.items()},
        )

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "demographics": {k: list(v) for k, v in self.demographics.items()},
        }


@dataclass(frozen=True, eq=False)
class AnnotatedDataset:
    """Samples, annotators and the full, unaggregated annotation multiset.

    The constructor validates all invariants and raises :class:`SchemaError`
    on the first violation.
    """

    label_set: tuple[str, ...]
    samples: tuple[Sample, ...]
    annotators: tuple[Annotator, ...]
    annotations: tuple[Annotation, ...]
    demographic_vocab: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "label_set", tuple(self.label_set))
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "annotators", tuple(self.annotators))
        object.__setattr__(self, "annotations", tuple(self.annotations))
        object.__setattr__(
            self, "demographic_vocab", {k: tuple(v) for k, v in self.demographic_vocab.items()}
        )
        self._validate()

    def _validate(self) -> None:
        if len(self.label_set) < 2:
            raise SchemaError("label set must declare at least two labels")
        if len(set(self.label_set)) != len(self.label_set):
            raise SchemaError("label set contains duplicates")
        labels = set(self.label_set)

        seen_samples: set[str] = set()
        for s in self.samples:
            if s.sample_id in seen_samples:
                raise SchemaError(f"duplicate sample_id {s.sample_id!r}")
            if not s.text:
                raise SchemaError(f"sample {s.sample_id!r} has empty text")
            seen_samples.add(s.sample_id)

        seen_annotators: set[str] = set()
        for a in self.annotators:
            if a.annotator_id in seen_annotators:
                raise SchemaError(f"duplicate annotator_id {a.annotator_id!r}")
            seen_annotators.add(a.annotator_id)
            for attr, value in (a.demographics or {}).items():
                if attr not in self.demographic_vocab:
                    raise SchemaError(
                        f"annotator {a.annotator_id!r}: undeclared demographic attribute {attr!r}"
                    )
                if value not in self.demographic_vocab[attr]:
                    raise SchemaError(
                        f"annotator {a.annotator_id!r}: value {value!r} not in vocabulary of {attr!r}"
                    )

        pairs: set[tuple[str, str]] = set()
        annotated: set[str] = set()
        for ann in self.annotations:
            key = (ann.sample_id, ann.annotator_id)
            if key in pairs:
                raise SchemaError(f"duplicate annotation for pair (sample={key[0]}, annotator={key[1]})")
            pairs.add(key)
            if ann.sample_id not in seen_samples:
                raise SchemaError(f"annotation references unknown sample {ann.sample_id!r}")
            if ann.annotator_id not in seen_annotators:
                raise SchemaError(f"annotation references unknown annotator {ann.annotator_id!r}")
            if ann.label not in labels:
                raise SchemaError(
                    f"label {ann.label!r} on (sample={key[0]}, annotator={key[1]}) "
                    f"is not in the declared label set {list(self.label_set)}"
                )
            annotated.add(ann.sample_id)
        missing = seen_samples - annotated
        if missing:
            raise SchemaError(f"sample {sorted(missing)[0]!r} has no annotations")

    # -- lookups ---------------------------------------------------------

    @cached_property
    def sample_index(self) -> dict[str, Sample]:
        return {s.sample_id: s for s in self.samples}

    @cached_property
    def annotator_index(self) -> dict[str, Annotator]:
        return {a.annotator_id: a for a in self.annotators}

    @cached_property
    def by_sample(self) -> dict[str, tuple[Annotation, ...]]:
        groups: dict[str, list[Annotation]] = defaultdict(list)
        for ann in self.annotations:
            groups[ann.sample_id].append(ann)
        return {k: tuple(v) for k, v in groups.items()}

    @cached_property
    def by_annotator(self) -> dict[str, tuple[Annotation, ...]]:
        groups: dict[str, list[Annotation]] = defaultdict(list)
        for ann in self.annotations:
            groups[ann.annotator_id].append(ann)
        return {k: tuple(v) for k, v in groups.items()}

    @cached_property
    def label_lookup(self) -> dict[tuple[str, str], str]:
        return {(a.sample_id, a.annotator_id): a.label for a in self.annotations}

    @property
    def manifest(self) -> Manifest:
        return Manifest(self.label_set, dict(self.demographic_vocab))

    # -- derived datasets ------------------------------------------------

    def restrict(self, annotations: Iterable[Annotation]) -> "AnnotatedDataset":
        """New dataset holding only ``annotations``; orphaned samples and annotators are dropped."""
        kept = tuple(annotations)
        sample_ids = {a.sample_id for a in kept}
        annotator_ids = {a.annotator_id for a in kept}
        return AnnotatedDataset(
            label_set=self.label_set,
            samples=tuple(s for s in self.samples if s.sample_id in sample_ids),
            annotators=tuple(a for a in self.annotators if a.annotator_id in annotator_ids),
            annotations=kept,
            demographic_vocab=self.demographic_vocab,
        )

    def subset_samples(self, sample_ids: Iterable[str]) -> "AnnotatedDataset":
        wanted = set(sample_ids)
        return self.restrict(a for a in self.annotations if a.sample_id in wanted)

    def without_annotators(self, annotator_ids: Iterable[str]) -> "AnnotatedDataset":
        dropped = set(annotator_ids)
        return self.restrict(a for a in self.annotations if a.annotator_id not in dropped)

    def fingerprint(self) -> str:
        """SHA-256 over the canonically sorted content (labels, texts, demographics, annotations)."""
        h = hashlib.sha256()
        h.update(json.dumps(self.manifest.to_dict(), sort_keys=True).encode())
        for s in sorted(self.samples, key=lambda s: s.sample_id):
            h.update(json.dumps(["s", s.sample_id, s.text]).encode())
        for a in sorted(self.annotators, key=lambda a: a.annotator_id):
            h.update(json.dumps(["u", a.annotator_id, a.demographics or {}], sort_keys=True).encode())
        for ann in sorted(self.annotations, key=lambda x: (x.sample_id, x.annotator_id)):
            h.update(json.dumps(["a", ann.sample_id, ann.annotator_id, ann.label]).encode())
        return h.hexdigest()

    def __repr__(self) -> str:
        return (
            f"AnnotatedDataset(labels={list(self.label_set)}, samples={len(self.samples)}, "
            f"annotators={len(self.annotators)}, annotations={len(self.annotations)})"
        )


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise ParseError(f"manifest is not valid JSON: {exc.msg}", line=exc.lineno, path=str(path))
    return Manifest.from_dict(raw)


def _find_manifest(data_path: Path) -> Path:
    for candidate in (
        data_path.with_name(data_path.stem + ".manifest.json"),
        data_path.with_name("manifest.json"),
    ):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"no manifest given and none found next to {data_path}")


def _clean_demographics(raw, line: int, path: str) -> dict[str, str] | None:
    if raw is None:
        return None
    if not isinstance(raw, Mapping):
        raise ParseError("'demographics' must be an object", line=line, path=path)
    out = {}
    for k, v in raw.items():
        if v is None or v == "":
            continue
        out[str(k)] = str(v)
    return out or None


def _iter_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed JSON ({exc.msg})", line=lineno, path=str(path))
            if not isinstance(row, dict):
                raise ParseError("row is not a JSON object", line=lineno, path=str(path))
            yield lineno, row


def _iter_csv(path: Path, attributes: Sequence[str]) -> Iterable[tuple[int, dict]]:
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ParseError(f"missing required column(s) {missing}", line=1, path=str(path))
        for row in reader:
            lineno = reader.line_num
            if None in row or any(v is None for v in row.values()):
                raise ParseError("wrong number of fields", line=lineno, path=str(path))
            demo = {a: row[a] for a in attributes if a in row}
            out = {k: row[k] for k in REQUIRED_COLUMNS}
            out["demographics"] = demo
            yield lineno, out


def ingest(
    path: str | Path,
    format: str | None = None,
    manifest: str | Path | Manifest | None = None,
) -> AnnotatedDataset:
    """Read a JSONL or CSV annotation file into a validated dataset.

    ``format`` defaults to the file extension. When ``manifest`` is omitted a
    sidecar ``<stem>.manifest.json`` or ``manifest.json`` next to the data file
    is used. Raises :class:`ParseError` (with line number) for unreadable rows
    and :class:`SchemaError` for invariant violations.
    """
    path = Path(path)
    if format is None:
        format = path.suffix.lstrip(".").lower()
    if format not in ("jsonl", "csv"):
        raise ParseError(f"unsupported format {format!r} (expected jsonl or csv)", path=str(path))
    if not isinstance(manifest, Manifest):
        manifest = load_manifest(manifest if manifest is not None else _find_manifest(path))

    rows = _iter_jsonl(path) if format == "jsonl" else _iter_csv(path, list(manifest.demographics))

    samples: dict[str, Sample] = {}
    annotators: dict[str, Annotator] = {}
    annotations: list[Annotation] = []
    pairs: dict[tuple[str, str], int] = {}
    labels = set(manifest.labels)
    for lineno, row in rows:
        for col in REQUIRED_COLUMNS:
            if col not in row or row[col] is None:
                raise ParseError(f"missing field {col!r}", line=lineno, path=str(path))
            if not isinstance(row[col], str):
                raise ParseError(f"field {col!r} must be a string", line=lineno, path=str(path))
        sid, aid, label, text = row["sample_id"], row["annotator_id"], row["label"], row["text"]

        key = (sid, aid)
        if key in pairs:
            raise SchemaError(
                f"{path}:{lineno}: duplicate annotation for pair (sample={sid}, annotator={aid}); "
                f"first seen on line {pairs[key]}"
            )
        pairs[key] = lineno
        if label not in labels:
            raise SchemaError(
                f"{path}:{lineno}: label {label!r} not in declared label set {list(manifest.labels)}"
            )

        prev = samples.get(sid)
        if prev is None:
            samples[sid] = Sample(sid, text)
        elif prev.text != text:
            raise SchemaError(f"{path}:{lineno}: sample {sid!r} appears with different texts")

        demo = _clean_demographics(row.get("demographics"), lineno, str(path))
        for attr, value in (demo or {}).items():
            if attr not in manifest.demographics:
                raise SchemaError(f"{path}:{lineno}: undeclared demographic attribute {attr!r}")
            if value not in manifest.demographics[attr]:
                raise SchemaError(
                    f"{path}:{lineno}: demographic value {value!r} not in vocabulary of {attr!r}"
                )
        seen = annotators.get(aid)
        if seen is None:
            annotators[aid] = Annotator(aid, demo)
        elif demo is not None:
            if seen.demographics is None:
                annotators[aid] = Annotator(aid, demo)
            elif dict(seen.demographics) != demo:
                raise SchemaError(f"{path}:{lineno}: annotator {aid!r} has conflicting demographics")
        annotations.append(Annotation(sid, aid, label))

    return AnnotatedDataset(
        label_set=manifest.labels,
        samples=tuple(samples.values()),
        annotators=tuple(annotators.values()),
        annotations=tuple(annotations),
        demographic_vocab=manifest.demographics,
    )


def write_jsonl(dataset: AnnotatedDataset, path: str | Path) -> None:
    """Write ``dataset`` in the JSONL annotation format (one row per annotation)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for ann in dataset.annotations:
            row = {
                "sample_id": ann.sample_id,
                "text": dataset.sample_index[ann.sample_id].text,
                "annotator_id": ann.annotator_id,
                "label": ann.label,
            }
            demo = dataset.annotator_index[ann.annotator_id].demographics
            if demo:
                row["demographics"] = dict(demo)
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def write_manifest(manifest: Manifest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# disagreement statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleStats:
    sample_id: str
    label_histogram: Mapping[str, int]
    majority_label: str
    is_tie: bool
    ambiguity: float

    @property
    def n_annotations(self) -> int:
        return sum(self.label_histogram.values())


@dataclass(frozen=True)
class AnnotatorProfile:
    annotator_id: str
    n_annotations: int
    n_disagreements: int
    adr: float


def ambiguity(stats: SampleStats) -> float:
    """Rescaled majority complement: 0 for unanimity, 1 for a uniform histogram.

    Computed as ``k * (n - top) / ((k - 1) * n)`` where ``k`` is the size of
    the label set.
    """
    k = len(stats.label_histogram)
    total = stats.n_annotations
    top = stats.label_histogram[stats.majority_label]
    return (k * (total - top)) / ((k - 1) * total)


def _stats_from_labels(sample_id: str, labels: Iterable[str], label_set: Sequence[str]) -> SampleStats:
    counts = Counter(labels)
    histogram = {lab: counts.get(lab, 0) for lab in label_set}
    top = max(histogram.values())
    winners = [lab for lab in label_set if histogram[lab] == top]
    k = len(label_set)
    total = sum(histogram.values())
    amb = (k * (total - top)) / ((k - 1) * total)
    return SampleStats(sample_id, histogram, winners[0], len(winners) > 1, amb)


def majority_vote(dataset: AnnotatedDataset) -> dict[str, SampleStats]:
    """Per-sample label histogram and majority label.

    Ties go to the label that comes first in ``dataset.label_set``; ``is_tie``
    records that the top count was shared.
    """
    return {
        sid: _stats_from_labels(sid, (a.label for a in anns), dataset.label_set)
        for sid, anns in sorted(dataset.by_sample.items())
    }


def popularity(annotation: Annotation, stats: SampleStats) -> float:
    """Share of the sample's annotations carrying the same label as ``annotation``."""
    if annotation.sample_id != stats.sample_id:
        raise ValueError(
            f"annotation belongs to sample {annotation.sample_id!r}, stats to {stats.sample_id!r}"
        )
    return stats.label_histogram[annotation.label] / stats.n_annotations


def compute_adr(dataset: AnnotatedDataset, mv: Mapping[str, SampleStats]) -> dict[str, AnnotatorProfile]:
    """Average disagreement rate with the majority vote, per annotator."""
    out = {}
    for aid, anns in sorted(dataset.by_annotator.items()):
        n = len(anns)
        if n == 0:
            continue
        bad = sum(1 for a in anns if a.label != mv[a.sample_id].majority_label)
        out[aid] = AnnotatorProfile(aid, n, bad, bad / n)
    return out


def tie_annotation_fraction(dataset: AnnotatedDataset, mv: Mapping[str, SampleStats]) -> float:
    """Fraction of all annotations that sit on samples whose majority vote was a tie."""
    on_ties = sum(st.n_annotations for st in mv.values() if st.is_tie)
    return on_ties / len(dataset.annotations)
