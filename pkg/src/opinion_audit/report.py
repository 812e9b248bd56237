"""Audit reports (JSON / CSV / text) and the group-performance heatmap (SVG)."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from html import escape
from pathlib import Path
from typing import Mapping, Sequence

from .errors import EvaluationError
from .fairness import AuditScore, GroupedEvaluation

SCHEMA_VERSION = "1.0"


@dataclass(frozen=True)
class ModelResult:
    name: str
    config: dict
    score: AuditScore
    grouped: tuple[GroupedEvaluation, ...]
    breakdowns: Mapping[str, Sequence[GroupedEvaluation]] = field(default_factory=dict)
    excluded_users: tuple[str, ...] = ()
    n_eval_annotations: int = 0
    tuning: dict | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "config": self.config,
            "score": self.score.to_dict(),
            "grouped": [g.to_dict() for g in self.grouped],
            "breakdowns": {k: [g.to_dict() for g in v] for k, v in self.breakdowns.items()},
            "excluded_users": list(self.excluded_users),
            "n_eval_annotations": self.n_eval_annotations,
            "tuning": self.tuning,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelResult":
        return cls(
            name=d["name"],
            config=d["config"],
            score=AuditScore.from_dict(d["score"]),
            grouped=tuple(GroupedEvaluation.from_dict(g) for g in d["grouped"]),
            breakdowns={k: [GroupedEvaluation.from_dict(g) for g in v] for k, v in d["breakdowns"].items()},
            excluded_users=tuple(d["excluded_users"]),
            n_eval_annotations=d["n_eval_annotations"],
            tuning=d["tuning"],
        )


@dataclass(frozen=True)
class AuditReport:
    tool_version: str
    dataset_fingerprint: str
    dataset_summary: dict
    config: dict
    split: dict
    quality: dict
    models: tuple[ModelResult, ...]
    warnings: tuple[str, ...] = ()
    schema_version: str = SCHEMA_VERSION

    def model(self, name: str) -> ModelResult:
        for m in self.models:
            if m.name == name:
                return m
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "tool_version": self.tool_version,
            "dataset_fingerprint": self.dataset_fingerprint,
            "dataset_summary": self.dataset_summary,
            "config": self.config,
            "split": self.split,
            "quality": self.quality,
            "models": [m.to_dict() for m in self.models],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AuditReport":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {version!r} (expected {SCHEMA_VERSION})")
        return cls(
            tool_version=d["tool_version"],
            dataset_fingerprint=d["dataset_fingerprint"],
            dataset_summary=d["dataset_summary"],
            config=d["config"],
            split=d["split"],
            quality=d["quality"],
            models=tuple(ModelResult.from_dict(m) for m in d["models"]),
            warnings=tuple(d["warnings"]),
            schema_version=version,
        )


def load_report(path: str | Path) -> AuditReport:
    return AuditReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def _render_json(report: AuditReport) -> bytes:
    return (json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def _render_csv(report: AuditReport) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "table", "strategy", "metric", "group_id", "label", "size", "mean", "empty"])
    for m in report.models:
        tables = [("grouping", g) for g in m.grouped]
        tables += [(name, g) for name, gs in m.breakdowns.items() for g in gs]
        for table, ev in tables:
            for g in ev.groups:
                w.writerow([
                    m.name, table, ev.strategy.kind, ev.metric, g.group_id, g.label, g.size,
                    "" if g.mean is None else repr(g.mean), int(g.empty),
                ])
    return buf.getvalue().encode("utf-8")


def _fmt(x: float | None) -> str:
    return "  n/a" if x is None else f"{x:.4f}"


def _render_text(report: AuditReport) -> bytes:
    lines = [
        f"opinion-audit {report.tool_version} report (schema {report.schema_version})",
        f"dataset {report.dataset_fingerprint[:12]}  "
        + "  ".join(f"{k}={v}" for k, v in report.dataset_summary.items() if k != "labels"),
    ]
    grouping = report.config.get("grouping", {})
    lines.append(
        f"grouping {grouping.get('kind')}"
        + (f":{grouping['attribute']}" if grouping.get("attribute") else "")
        + f"  metrics {', '.join(report.config.get('metrics', []))}"
    )
    lines.append("")
    lines.append("rank  model      unfairness  performance")
    ranked = sorted(report.models, key=lambda m: (m.score.unfairness, m.name))
    for i, m in enumerate(ranked, start=1):
        lines.append(f"{i:<5} {m.name:<10} {m.score.unfairness:<11.4f} {m.score.general_performance:.4f}")
    if len(report.models) > 1:
        lines.append("")
        lines.append("unfairness:  " + " vs ".join(f"{m.name}: {m.score.unfairness:.2f}" for m in report.models))
        lines.append(
            "performance: " + " vs ".join(f"{m.name}: {m.score.general_performance:.2f}" for m in report.models)
        )
    for m in report.models:
        lines.append("")
        lines.append(f"[{m.name}] group means ({m.grouped[0].metric})")
        for g in m.grouped[0].groups:
            lines.append(f"  {g.label:<28} n={g.size:<6} {_fmt(g.mean)}")
        if m.excluded_users:
            lines.append(f"  excluded (low support): {', '.join(m.excluded_users)}")
    filtered = report.quality.get("filtered") or []
    if filtered:
        lines.append("")
        lines.append("filtered annotators (quality score):")
        for f in filtered:
            lines.append(f"  {f['annotator_id']}  {f['score']:.4f}")
    if report.warnings:
        lines.append("")
        lines.append("warnings:")
        lines.extend(f"  - {w}" for w in report.warnings)
    return ("\n".join(lines) + "\n").encode("utf-8")


def render_report(report: AuditReport, format: str = "json") -> bytes:
    """Serialise ``report`` as ``json`` (lossless), ``csv`` (group tables) or ``text`` (ranked summary)."""
    renderers = {"json": _render_json, "csv": _render_csv, "text": _render_text}
    try:
        return renderers[format](report)
    except KeyError:
        raise ValueError(f"unknown report format {format!r}") from None


def render_comparison(left: AuditReport, right: AuditReport, names: tuple[str, str] = ("A", "B")) -> bytes:
    """Side-by-side summary of two saved reports."""
    lines = [
        f"{'':<12}{names[0]:>24}{names[1]:>24}",
        f"{'dataset':<12}{left.dataset_fingerprint[:12]:>24}{right.dataset_fingerprint[:12]:>24}",
        f"{'grouping':<12}{left.config['grouping']['kind']:>24}{right.config['grouping']['kind']:>24}",
    ]
    models = list(dict.fromkeys([m.name for m in left.models] + [m.name for m in right.models]))
    for name in models:
        cells = []
        for rep in (left, right):
            try:
                s = rep.model(name).score
                cells.append(f"U={s.unfairness:.4f} P={s.general_performance:.4f}")
            except KeyError:
                cells.append("-")
        lines.append(f"{name:<12}{cells[0]:>24}{cells[1]:>24}")
    return ("\n".join(lines) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# heatmap
# ---------------------------------------------------------------------------

_LOW = (247, 251, 255)
_HIGH = (8, 48, 107)


def _shade(value: float) -> str:
    t = min(max(value, 0.0), 1.0)
    rgb = (round(lo + (hi - lo) * t) for lo, hi in zip(_LOW, _HIGH))
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def render_heatmap(evaluations: Mapping[str, GroupedEvaluation], title: str | None = None) -> bytes:
    """Groups as rows, models as columns, cell shade proportional to the group mean.

    All evaluations must share strategy and group ids, and there must be at
    least two groups.
    """
    if not evaluations:
        raise EvaluationError("no evaluations to plot")
    names = list(evaluations)
    first = evaluations[names[0]]
    ids = [g.group_id for g in first.groups]
    for n in names[1:]:
        ev = evaluations[n]
        if ev.strategy != first.strategy or [g.group_id for g in ev.groups] != ids:
            raise EvaluationError(f"model {n!r} uses a different grouping")
    if len(ids) < 2:
        raise EvaluationError("heatmap needs at least two groups")

    cell_w, cell_h = 90, 34
    left, top = 170, 60
    width = left + cell_w * len(names) + 20
    height = top + cell_h * len(ids) + 30
    heading = title or f"Group mean {first.metric or 'metric'} by {first.strategy.kind}"
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="14">{escape(heading)}</text>',
    ]
    for j, n in enumerate(names):
        x = left + j * cell_w + cell_w // 2
        out.append(f'<text x="{x}" y="{top - 10}" text-anchor="middle">{escape(n)}</text>')
    for i, g in enumerate(first.groups):
        y = top + i * cell_h
        out.append(
            f'<text x="{left - 8}" y="{y + cell_h // 2 + 4}" text-anchor="end">{escape(g.label)}</text>'
        )
        for j, n in enumerate(names):
            mean = evaluations[n].groups[i].mean
            x = left + j * cell_w
            fill = "#dddddd" if mean is None else _shade(mean)
            ink = "#000000" if mean is None or mean < 0.6 else "#ffffff"
            text = "n/a" if mean is None else f"{mean:.2f}"
            out.append(
                f'<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" fill="{fill}" stroke="#ffffff"/>'
            )
            out.append(
                f'<text x="{x + cell_w // 2}" y="{y + cell_h // 2 + 4}" text-anchor="middle" fill="{ink}">{text}</text>'
            )
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")
