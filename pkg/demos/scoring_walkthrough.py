"""
Scoring the synthetic cohort
============================

Load the bundled 12-provider cohort, score it under the three Unknown
treatments and look at how far apart they sit.

Run from the repository root::

    python3 demos/scoring_walkthrough.py
"""

from pathlib import Path

import numpy as np

from aipi.evidence_model import PILLARS, load_dataset
from aipi.release import score_dataset
from aipi.score import known_only_report, render_known_only

FIXTURE = Path(__file__).resolve().parent.parent / "fixtures" / "cohort"

d = load_dataset(FIXTURE)
print(f"{len(d.indicators)} indicators, {len(d.subjects)} subjects, {len(d.codes)} raw codes")

# %%
# Score everything. c_ref (the count scale) is derived from this dataset.
res = score_dataset(d)
print("c_ref:", res.c_ref)

# %%
# Each subject gets a lower bound (Unknown = 0), a known-only mean and an
# upper bound (Unknown = 1). The width of the band is exactly 1 - coverage.
ids = sorted(res.subject_scores)
evid = np.array([res.subject_scores[s].aipi_evid for s in ids])
opt = np.array([res.subject_scores[s].aipi_opt for s in ids])
cov = np.array([res.subject_scores[s].mean_coverage for s in ids])

print(f"\n{'subject':<16} {'evid':>6} {'known':>6} {'opt':>6} {'cov':>6}")
for s in ids:
    sc = res.subject_scores[s]
    known = "  n/a" if sc.aipi_known is None else f"{sc.aipi_known:6.3f}"
    print(f"{s:<16} {sc.aipi_evid:6.3f} {known} {sc.aipi_opt:6.3f} {sc.mean_coverage:6.3f}")

print("\nmax |(opt - evid) - (1 - coverage)| =", np.max(np.abs((opt - evid) - (1 - cov))))
print("median coverage:", np.median(cov))

# %%
# Per-pillar view for the best covered subject.
best = ids[int(np.argmax(cov))]
for p in PILLARS:
    ps = res.subject_scores[best].pillars[p]
    print(f"{best} {p.value}: evid={ps.s_evid:.3f} known={ps.s_known} "
          f"coverage=[{ps.coverage_min:.3f}, {ps.coverage_max:.3f}]")

# %%
# The known-only provider chart. Each bar is the sum of the four pillar
# contributions; coverage is printed next to it so a tall bar resting on
# little evidence is easy to spot.
print()
print(render_known_only(known_only_report(res.provider_scores)))
