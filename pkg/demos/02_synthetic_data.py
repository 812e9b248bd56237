# Generating a dataset with two opinion clusters and a few spammers,
# then checking the generated statistics against the generator's expectations.
# Run: python3 demos/02_synthetic_data.py
from opinion_audit.dataset import compute_adr, majority_vote
from opinion_audit.quality import annotator_quality, filter_annotators
from opinion_audit.synth import ClusterSpec, SynthConfig, expected_stats, generate

config = SynthConfig(
    n_samples=800,
    n_annotators=40,
    annotators_per_sample=7,
    labels=("A", "B", "C"),
    fraction_ambiguous=0.4,
    spammer_count=3,
    seed=7,
    clusters=(
        ClusterSpec(0.75, rule=0, noise_rate=0.05, demographics={"gender": {"female": 0.5, "male": 0.5}}),
        ClusterSpec(0.25, rule=1, noise_rate=0.05, demographics={"gender": {"other": 1.0}}),
    ),
)
ds, truth = generate(config)
print(ds)
print("spammers:", sorted(truth.spammers))

adr = compute_adr(ds, majority_vote(ds))
for cluster in (0, 1):
    members = truth.members(cluster)
    mean_adr = sum(adr[a].adr for a in members) / len(members)
    print(f"cluster {cluster}: {len(members)} members, mean ADR {mean_adr:.3f}")
print("expected:", expected_stats(config))

# spammers label uniformly at random, so their agreement with peers sits near 1/3
quality = annotator_quality(ds)
kept = filter_annotators(ds, quality, 0.4)
print("removed:", sorted(set(ds.annotator_index) - set(kept.annotator_index)))
