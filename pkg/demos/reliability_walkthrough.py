"""
Inter-coder reliability
=======================

A stratified sample of (subject, indicator) items is double coded. Here
we draw the sample, compute Krippendorff's alpha on it and show how alpha
reacts to a coder who always disagrees.
"""

from pathlib import Path

from aipi.evidence_model import load_dataset
from aipi.normalize import compute_c_ref
from aipi.reliability import SplitMix64, krippendorff_alpha, reliability_report, select_sample

FIXTURE = Path(__file__).resolve().parent.parent / "fixtures" / "cohort"
d = load_dataset(FIXTURE)

# %%
# The sample depends only on the seed and the dataset shape, never on the
# code values, so it can be drawn before anyone starts coding.
sample = select_sample(d, 0.2, seed=7)
print(f"{len(sample)} items sampled; first five: {sample[:5]}")
print("first SplitMix64 draw for seed 7:", SplitMix64(7).next())

# %%
rep = reliability_report(d, compute_c_ref(d), 0.2, 7)
print(f"alpha overall (interval on normalized values): {rep.alpha_overall:.3f}")
for kind, a in rep.alpha_by_kind.items():
    print(f"  {kind:<9} {'undefined' if a is None else f'{a:.3f}'}")
print(f"percent agreement: {rep.percent_agreement:.3f}, meets threshold: {rep.to_json()['meets_threshold']}")

# %%
# Toy cases: perfect agreement, one systematic contrarian, constant data.
print("\nperfect     ", krippendorff_alpha([["yes", "yes"], ["no", "no"], ["yes", "yes"]]))
print("contrarian  ", round(krippendorff_alpha([[0, 1]] * 5 + [[1, 0]] * 5), 3))
print("constant    ", krippendorff_alpha([["yes", "yes"], ["yes", "yes"]]))
