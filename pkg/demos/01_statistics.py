# Per-sample and per-annotator statistics on a tiny hand-made dataset.
# Run: python3 demos/01_statistics.py
import json
import tempfile
from pathlib import Path

from opinion_audit.dataset import compute_adr, ingest, majority_vote, popularity
from opinion_audit.quality import annotator_quality

rows = [
    ("s1", "ann", "T"), ("s1", "bob", "T"), ("s1", "cy", "NT"), ("s1", "dee", "T"), ("s1", "eve", "NT"),
    ("s2", "ann", "NT"), ("s2", "bob", "NT"), ("s2", "cy", "NT"), ("s2", "dee", "NT"),
    ("s3", "ann", "T"), ("s3", "bob", "NT"), ("s3", "cy", "T"), ("s3", "eve", "NT"),  # a 2-2 tie
]
tmp = Path(tempfile.mkdtemp())
with open(tmp / "data.jsonl", "w") as fh:
    for sid, aid, lab in rows:
        fh.write(json.dumps({"sample_id": sid, "text": f"comment {sid}", "annotator_id": aid, "label": lab}) + "\n")
(tmp / "manifest.json").write_text(json.dumps({"labels": ["T", "NT"]}))

ds = ingest(tmp / "data.jsonl")
print(ds)

stats = majority_vote(ds)
for sid, st in stats.items():
    # ties go to the label listed first in label_set
    print(sid, dict(st.label_histogram), st.majority_label, "tie" if st.is_tie else "", f"ambiguity={st.ambiguity:.2f}")

# popularity: share of the sample's annotators who gave the same label
for a in ds.annotations[:5]:
    print(a.sample_id, a.annotator_id, a.label, f"{popularity(a, stats[a.sample_id]):.2f}")

adr = compute_adr(ds, stats)
quality = annotator_quality(ds)
for aid in sorted(adr):
    print(f"{aid:>4}  n={adr[aid].n_annotations}  adr={adr[aid].adr:.2f}  quality={quality[aid].score:.2f}")
