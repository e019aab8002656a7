"""Nested leave-one-person-out splits and the evaluation metrics.

Every ordered (test, validation) signer pair is one section, so n signers
yield n*(n-1) sections; metrics are macro-averaged over classes present in
the fold.
"""

import numpy as np

from signenc import aggregate, confusion, generate_splits, macro_metrics, materialize, normalize_rows
from signenc.metrics import SectionResult, format_mean_std
from signenc.synthetic import SyntheticSpec, generate_dataset
import tempfile
from pathlib import Path

root = Path(tempfile.mkdtemp()) / "ds"
manifest = generate_dataset(SyntheticSpec(n_classes=3, n_signers=4, takes_per_sign=2, seed=0), root)
print(f"dataset: {len(manifest.samples)} samples, signers {manifest.signers}")

plans = generate_splits(manifest)
print(f"{len(manifest.signers)} signers -> {len(plans)} sections (n(n-1))")
for plan in plans[:3]:
    print(f"  section {plan.section_id}: test={plan.test_signer} val={plan.val_signer} train={plan.train_signers}")

train, val, test = materialize(plans[0], manifest)
print(f"section 0 partition sizes: train {len(train)}, val {len(val)}, test {len(test)}")
assert {s.signer for s in train}.isdisjoint({s.signer for s in test})

# metrics from predicted labels
true = ["a", "a", "b", "b", "c", "c"]
pred = ["a", "b", "b", "b", "c", "a"]
cm = confusion(true, pred, vocabulary=("a", "b", "c"))
print("confusion counts:\n", cm.counts)
normalized, absent = normalize_rows(cm)
print("row-normalized:\n", np.round(normalized, 2))
m = macro_metrics(cm)
print(f"accuracy {m.accuracy:.3f}  macro P {m.macro_precision:.3f}  "
      f"macro R {m.macro_recall:.3f}  macro F1 {m.macro_f1:.3f}")

# aggregation across sections reports mean ± population std
sections = [
    SectionResult(section_id=i, accuracy=a, macro_precision=a, macro_recall=a, macro_f1=a)
    for i, a in enumerate([0.88, 0.95, 1.0, 0.9])
]
report = aggregate(sections)
agg = report.aggregate["accuracy"]
print("aggregate accuracy:", format_mean_std(agg["mean"], agg["std"]))
