# The main use: train a majority-vote model and an annotator-conditioned model,
# then compare how evenly they serve users grouped by disagreement rate.
# Takes about a minute.
# Run: python3 demos/03_audit.py
from opinion_audit.audit import AuditConfig, run_audit
from opinion_audit.report import render_report
from opinion_audit.synth import ClusterSpec, SynthConfig, generate


def genders(other):
    return {"female": (1 - other) / 2, "male": (1 - other) / 2, "other": other}


ds, truth = generate(SynthConfig(
    n_samples=2000,
    n_annotators=150,
    fraction_ambiguous=0.95,
    seed=1,
    clusters=(
        ClusterSpec(0.8, rule=1, noise_rate=0.03, demographics={"gender": genders(1 / 120)}),
        ClusterSpec(0.2, rule=0, noise_rate=0.03, demographics={"gender": genders(2 / 30)}),
    ),
))

run = run_audit(ds, AuditConfig(models=("mv", "annotator", "oracle"), seed=1))
print(render_report(run.report, "text").decode())

for name in ("mv", "annotator"):
    m = run.report.model(name)
    cells = ", ".join(f"{g.group_id}: {g.mean:.2f} (n={g.size})" for g in m.grouped[0].non_empty)
    print(f"{name:>9}  {cells}")
