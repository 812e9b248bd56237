"""End-to-end audit: filter, split, group on the training split, train, evaluate, score."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import __version__
from .dataset import AnnotatedDataset, compute_adr, majority_vote, tie_annotation_fraction
from .fairness import (
    DEFAULT_EDGES,
    GroupedEvaluation,
    aggregate,
    annotation_level_breakdown,
    drop_members,
    group_users,
    multi_metric_score,
    parse_grouping,
    sample_level_breakdown,
    user_performance_from_predictions,
)
from .featurize import FeatureSpec
from .learn import LAMBDA_GRID, TrainConfig
from .metrics import get_metric
from .models import (
    ModelConfig,
    TrainedAuditModel,
    balance_annotations,
    fit_audit_model,
    normalize_kind,
    split_samples,
)
from .quality import annotator_quality, filter_annotators, filtered_out, score_summary
from .report import AuditReport, ModelResult

TIE_WARNING_FRACTION = 0.01


@dataclass(frozen=True)
class AuditConfig:
    models: tuple[str, ...] = ("mv", "annotator")
    grouping: str = "adr"
    bin_edges: tuple[float, ...] = DEFAULT_EDGES
    metrics: tuple[str, ...] = ("accuracy",)
    quality_threshold: float = 0.0
    min_support: int = 3
    seed: int = 0
    eval_fraction: float = 0.2
    balance: bool = True
    n_text_buckets: int = 2**18
    train_config: TrainConfig = field(default_factory=TrainConfig)
    tune: bool = True
    grid: tuple[float, ...] = LAMBDA_GRID
    cv_folds: int = 5

    def __post_init__(self):
        if not self.models:
            raise ValueError("at least one model kind is required")
        object.__setattr__(self, "models", tuple(normalize_kind(m) for m in self.models))
        if len(set(self.models)) != len(self.models):
            raise ValueError("model kinds must not repeat")
        if not self.metrics:
            raise ValueError("at least one metric is required")
        for m in self.metrics:
            get_metric(m)
        parse_grouping(self.grouping, self.bin_edges)
        if not 0.0 <= self.quality_threshold <= 1.0:
            raise ValueError("quality threshold must lie in [0, 1]")
        if self.min_support < 1:
            raise ValueError("min_support must be >= 1")

    def to_dict(self) -> dict:
        return {
            "models": list(self.models),
            "grouping": parse_grouping(self.grouping, self.bin_edges).to_dict(),
            "metrics": list(self.metrics),
            "quality_threshold": self.quality_threshold,
            "min_support": self.min_support,
            "seed": self.seed,
            "eval_fraction": self.eval_fraction,
            "balance": self.balance,
            "train_config": self.train_config.to_dict(),
            "tune": self.tune,
            "grid": list(self.grid),
            "cv_folds": self.cv_folds,
        }


@dataclass
class AuditRun:
    report: AuditReport
    models: dict[str, TrainedAuditModel]
    train_dataset: AnnotatedDataset
    eval_dataset: AnnotatedDataset


def run_audit(dataset: AnnotatedDataset, config: AuditConfig = AuditConfig()) -> AuditRun:
    strategy = parse_grouping(config.grouping, config.bin_edges)
    warnings: list[str] = []

    scores = annotator_quality(dataset)
    dropped = sorted(filtered_out(scores, config.quality_threshold))
    working = filter_annotators(dataset, scores, config.quality_threshold)
    if dropped:
        warnings.append(f"quality filter removed {len(dropped)} annotator(s) below {config.quality_threshold}")

    train_ids, eval_ids = split_samples(working, config.eval_fraction, config.seed)
    train_ds = working.subset_samples(train_ids)
    eval_ds = working.subset_samples(eval_ids)

    train_mv = majority_vote(train_ds)
    ties = tie_annotation_fraction(train_ds, train_mv)
    if ties > TIE_WARNING_FRACTION:
        warnings.append(
            f"{ties:.1%} of training annotations sit on majority-vote ties "
            "(broken by label order; affects ADR)"
        )
    profiles = compute_adr(train_ds, train_mv)
    eval_stats = majority_vote(eval_ds)

    eval_annotations = sorted(eval_ds.annotations, key=lambda a: (a.sample_id, a.annotator_id))
    balance = None
    if config.balance:
        eval_annotations, balance = balance_annotations(eval_annotations, working.label_set, config.seed)

    skeleton = None
    if strategy.unit == "user":
        universe = profiles
        if strategy.kind == "demographic_partition":
            universe = {aid: None for aid in sorted(working.annotator_index)}
        skeleton = group_users(universe, strategy, working)

    base_spec = FeatureSpec(config.n_text_buckets, working.demographic_vocab)
    results = []
    trained = {}
    for kind in config.models:
        mcfg = ModelConfig.for_kind(
            kind, base_spec, train_config=config.train_config, tune=config.tune,
            grid=tuple(config.grid), cv_folds=config.cv_folds,
        )
        model = fit_audit_model(train_ds, mcfg, eval_dataset=eval_ds, mv=train_mv)
        trained[kind] = model
        preds = model.predict_annotations(eval_ds, eval_annotations)

        perf, excluded = user_performance_from_predictions(
            eval_annotations, preds, config.metrics, config.min_support
        )
        grouped: list[GroupedEvaluation] = []
        for metric in config.metrics:
            if strategy.kind == "popularity_bins":
                grouped.append(annotation_level_breakdown(eval_annotations, preds, eval_stats, strategy.bin_edges, metric))
            elif strategy.kind == "ambiguity_bins":
                grouped.append(sample_level_breakdown(eval_annotations, preds, eval_stats, strategy.bin_edges, metric))
            else:
                grouped.append(aggregate(skeleton, perf, metric))
        score = multi_metric_score(grouped)
        if strategy.unit == "annotation":
            grouped = [drop_members(g) for g in grouped]

        breakdowns = {
            "popularity": [
                drop_members(annotation_level_breakdown(eval_annotations, preds, eval_stats, config.bin_edges, m))
                for m in config.metrics
            ],
            "ambiguity": [
                sample_level_breakdown(eval_annotations, preds, eval_stats, config.bin_edges, m)
                for m in config.metrics
            ],
        }

        if score.empty_groups:
            warnings.append(f"{kind}: dropped empty group(s) {', '.join(score.empty_groups)}")
        if excluded:
            warnings.append(
                f"{kind}: {len(excluded)} user(s) below min support {config.min_support} excluded"
            )
        if grouped[0].ungrouped:
            warnings.append(f"{kind}: {len(grouped[0].ungrouped)} evaluated user(s) not in any group")
        results.append(
            ModelResult(
                name=kind,
                config=mcfg.to_dict(),
                score=score,
                grouped=tuple(grouped),
                breakdowns=breakdowns,
                excluded_users=tuple(excluded),
                n_eval_annotations=len(eval_annotations),
                tuning=model.tuning.to_dict() if model.tuning is not None else None,
            )
        )

    report = AuditReport(
        tool_version=__version__,
        dataset_fingerprint=dataset.fingerprint(),
        dataset_summary={
            "labels": list(dataset.label_set),
            "n_samples": len(dataset.samples),
            "n_annotators": len(dataset.annotators),
            "n_annotations": len(dataset.annotations),
        },
        config=config.to_dict(),
        split={
            "n_train_samples": len(train_ids),
            "n_eval_samples": len(eval_ids),
            "n_eval_annotations_total": len(eval_ds.annotations),
            "n_eval_annotations_scored": len(eval_annotations),
            "tie_annotation_fraction": ties,
            "balance": balance.to_dict() if balance is not None else None,
        },
        quality={
            "threshold": config.quality_threshold,
            "summary": score_summary(scores),
            "filtered": [{"annotator_id": a, "score": scores[a].score} for a in dropped],
        },
        models=tuple(results),
        warnings=tuple(warnings),
    )
    return AuditRun(report, trained, train_ds, eval_ds)

