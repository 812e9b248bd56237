"""Command-line entry point: ``opinion-audit <validate|stats|synth|audit|compare>``.

Exit status is 0 on success, 1 on a usage error and 2 when the input data
(or a saved report) cannot be used.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .audit import AuditConfig, run_audit
from .dataset import ambiguity, compute_adr, ingest, majority_vote
from .errors import AuditError, DataError
from .fairness import DEFAULT_EDGES
from .learn import TrainConfig
from .metrics import METRICS
from .quality import annotator_quality
from .report import load_report, render_comparison, render_heatmap, render_report
from .synth import SynthConfig, generate, write_synth

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; this tool reserves 2 for data errors
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _edges(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bin edges must be comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="opinion-audit", description="Audit subjective-label classifiers for opinion exclusion.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def data_args(sp):
        sp.add_argument("--data", required=True, help="JSONL or CSV annotation file")
        sp.add_argument("--manifest", help="manifest JSON (default: sidecar next to --data)")
        sp.add_argument("--format", choices=("jsonl", "csv"), help="override format detection")

    v = sub.add_parser("validate", help="ingest a dataset and check its invariants")
    data_args(v)

    s = sub.add_parser("stats", help="per-sample and per-annotator statistics")
    data_args(s)
    s.add_argument("--json", action="store_true", help="emit JSON instead of tables")

    g = sub.add_parser("synth", help="generate a synthetic dataset")
    g.add_argument("--config", required=True, help="SynthConfig JSON file")
    g.add_argument("--out", required=True, help="output directory")

    a = sub.add_parser("audit", help="train model configurations and score their unfairness")
    data_args(a)
    a.add_argument("--model", action="append", choices=("mv", "annotator", "oracle"),
                   help="configuration to audit (repeatable; default mv and annotator)")
    a.add_argument("--group", default="adr", help="adr | popularity | ambiguity | demographic:<attr>")
    a.add_argument("--bins", type=_edges, default=DEFAULT_EDGES, help="comma-separated bin edges")
    a.add_argument("--metric", action="append", choices=sorted(METRICS),
                   help="metric (repeatable; scores are averaged)")
    a.add_argument("--quality-threshold", type=float, default=0.0)
    a.add_argument("--min-support", type=int, default=3)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--eval-fraction", type=float, default=0.2)
    a.add_argument("--no-balance", action="store_true", help="score all held-out annotations")
    a.add_argument("--no-tune", action="store_true", help="skip the regularisation grid search")
    a.add_argument("--out", required=True, help="output directory")

    c = sub.add_parser("compare", help="show two saved reports side by side")
    c.add_argument("left")
    c.add_argument("right")
    return p


def _load(args):
    return ingest(args.data, format=args.format, manifest=args.manifest)


def _cmd_validate(args) -> int:
    ds = _load(args)
    print(f"ok: {ds!r}")
    return EXIT_OK


def _cmd_stats(args) -> int:
    ds = _load(args)
    mv = majority_vote(ds)
    adr = compute_adr(ds, mv)
    quality = annotator_quality(ds)
    if args.json:
        out = {
            "samples": {
                sid: {
                    "histogram": dict(st.label_histogram),
                    "majority_label": st.majority_label,
                    "is_tie": st.is_tie,
                    "ambiguity": ambiguity(st),
                }
                for sid, st in mv.items()
            },
            "annotators": {
                aid: {
                    "n_annotations": p.n_annotations,
                    "adr": p.adr,
                    "quality": quality[aid].score if aid in quality else None,
                }
                for aid, p in adr.items()
            },
        }
        print(json.dumps(out, indent=2, sort_keys=True))
        return EXIT_OK
    labels = list(ds.label_set)
    print("sample".ljust(16) + "".join(l[:8].rjust(9) for l in labels) + "  majority  tie  ambiguity")
    for sid, st in mv.items():
        counts = "".join(str(st.label_histogram.get(l, 0)).rjust(9) for l in labels)
        print(f"{sid:<16}{counts}  {st.majority_label:<8}  {'y' if st.is_tie else 'n':<3}  {ambiguity(st):.4f}")
    print()
    print(f"{'annotator':<16}{'n':>6}{'adr':>9}{'quality':>9}")
    for aid, p in adr.items():
        q = quality.get(aid)
        qs = f"{q.score:.4f}" if q is not None else "n/a"
        print(f"{aid:<16}{p.n_annotations:>6}{p.adr:>9.4f}{qs:>9}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.config}: not valid JSON ({exc.msg})")
    try:
        config = SynthConfig.from_dict(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{args.config}: bad synth config ({exc})")
    dataset, truth = generate(config)
    paths = write_synth(dataset, truth, args.out)
    print(f"wrote {paths['data']} ({len(dataset.annotations)} annotations), {paths['manifest']}, {paths['truth']}")
    return EXIT_OK


def _cmd_audit(args) -> int:
    try:
        config = AuditConfig(
            models=tuple(args.model or ("mv", "annotator")),
            grouping=args.group,
            bin_edges=args.bins,
            metrics=tuple(args.metric or ("accuracy",)),
            quality_threshold=args.quality_threshold,
            min_support=args.min_support,
            seed=args.seed,
            eval_fraction=args.eval_fraction,
            balance=not args.no_balance,
            train_config=TrainConfig(seed=args.seed),
            tune=not args.no_tune,
        )
    except (ValueError, AuditError) as exc:
        raise UsageError(f"audit: {exc}")
    dataset = _load(args)
    run = run_audit(dataset, config)
    report = run.report
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_bytes(render_report(report, "json"))
    (out / "report.csv").write_bytes(render_report(report, "csv"))
    text = render_report(report, "text")
    (out / "report.txt").write_bytes(text)
    evaluations = {m.name: m.grouped[0] for m in report.models}
    try:
        (out / "heatmap.svg").write_bytes(render_heatmap(evaluations))
    except AuditError as exc:
        print(f"warning: heatmap skipped: {exc}", file=sys.stderr)
    sys.stdout.write(text.decode("utf-8"))
    return EXIT_OK


def _cmd_compare(args) -> int:
    try:
        left, right = load_report(args.left), load_report(args.right)
    except (ValueError, KeyError) as exc:
        raise DataError(f"cannot read report: {exc}")
    names = (Path(args.left).name, Path(args.right).name)
    if names[0] == names[1]:
        names = (Path(args.left).parent.name or names[0], Path(args.right).parent.name or names[1])
    sys.stdout.write(render_comparison(left, right, names).decode("utf-8"))
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "stats": _cmd_stats,
    "synth": _cmd_synth,
    "audit": _cmd_audit,
    "compare": _cmd_compare,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("opinion-audit: a subcommand is required")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (AuditError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
