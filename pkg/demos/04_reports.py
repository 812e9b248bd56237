# Report formats: JSON (round-trips), CSV, text, and the SVG heatmap.
# Run: python3 demos/04_reports.py
import json
import tempfile
from pathlib import Path

from opinion_audit.audit import AuditConfig, run_audit
from opinion_audit.learn import TrainConfig
from opinion_audit.report import AuditReport, load_report, render_comparison, render_heatmap, render_report
from opinion_audit.synth import ClusterSpec, SynthConfig, generate

ds, _ = generate(SynthConfig(
    n_samples=300, n_annotators=30, annotators_per_sample=6, fraction_ambiguous=0.6, seed=2,
    clusters=(ClusterSpec(0.7, 1, 0.1), ClusterSpec(0.3, 0, 0.1)),
))
out = Path(tempfile.mkdtemp())

by_adr = run_audit(ds, AuditConfig(models=("mv", "annotator"), metrics=("accuracy", "f1"),
                                   tune=False, train_config=TrainConfig(max_epochs=20))).report
by_ambiguity = run_audit(ds, AuditConfig(models=("mv", "annotator"), grouping="ambiguity",
                                         tune=False, train_config=TrainConfig(max_epochs=20))).report

blob = render_report(by_adr, "json")
(out / "adr.json").write_bytes(blob)
(out / "ambiguity.json").write_bytes(render_report(by_ambiguity, "json"))
assert AuditReport.from_dict(json.loads(blob)) == by_adr
print("schema", json.loads(blob)["schema_version"], "-", len(blob), "bytes")

print(render_report(by_adr, "csv").decode().splitlines()[0])
print(render_comparison(load_report(out / "adr.json"), load_report(out / "ambiguity.json"),
                        ("by adr", "by ambiguity")).decode())

svg = render_heatmap({m.name: m.grouped[0] for m in by_adr.models})
(out / "heatmap.svg").write_bytes(svg)
print("heatmap written to", out / "heatmap.svg")
