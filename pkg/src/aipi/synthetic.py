"""Synthetic datasets: the bundled 12-provider cohort and random generators.

Nothing here describes real organizations. The cohort is shaped to look
like an early pilot: low coverage, a handful of multi-system providers,
some double coding and a few stale or third-party artifacts.

Regenerate the bundled fixture with::

    python -m aipi.synthetic fixtures/cohort
"""

from __future__ import annotations

import random
import sys
from datetime import date, timedelta
from pathlib import Path

from aipi.evidence_model import (
    PILLARS,
    UNKNOWN,
    Dataset,
    EvidenceArtifact,
    EvidenceClass,
    IndicatorDef,
    IndicatorKind,
    Pillar,
    RawCode,
    SourceKind,
    Subject,
    SubjectKind,
    write_dataset,
)
from aipi.reliability import select_sample

COHORT_SEED = 20250930
COHORT_CUTOFF = date(2025, 9, 30)
COHORT_SAMPLE = (0.2, 7)  # (fraction, seed) used to pick double-coded items

B, O, C = IndicatorKind.BINARY, IndicatorKind.ORDINAL3, IndicatorKind.COUNT

CODEBOOK: tuple[tuple[str, IndicatorKind, str], ...] = (
    ("PG-01", B, "Multi-stakeholder advisory body with public charter"),
    ("PG-02", O, "Public consultations with disposition matrix"),
    ("PG-03", C, "Completed public consultations in the window"),
    ("PG-04", B, "External proposal forum with dated dispositions"),
    ("PG-05", O, "External community red teaming with published outcomes"),
    ("PG-06", B, "Implemented limits on exclusive access"),
    ("ID-01", C, "Languages with localized policies and redress"),
    ("ID-02", O, "Accessibility conformance with scope and date"),
    ("ID-03", B, "Team representation statistics with denominators"),
    ("ID-04", O, "Structured involvement of underrepresented groups"),
    ("ID-05", B, "Disaggregated evaluation across locales"),
    ("ID-06", C, "Co-production partnerships outside high-income markets"),
    ("TR-01", O, "Current model or system card"),
    ("TR-02", B, "Datasheet for training data"),
    ("TR-03", B, "Release notes linking safeguard changes to versions"),
    ("TR-04", O, "Documented internal review process"),
    ("TR-05", B, "Public channel for independent inquiries"),
    ("TR-06", C, "Published answers to independent inquiries"),
    ("AC-01", B, "Vulnerability disclosure policy"),
    ("AC-02", B, "Vulnerability handling process"),
    ("AC-03", O, "Redress channel with stated response times"),
    ("AC-04", C, "Incident postmortems contributed to public repositories"),
    ("AC-05", O, "Independent audit with public findings"),
    ("AC-06", B, "Whistleblowing channel independent of line management"),
)

# indicators a procurement floor policy treats as required artifacts
REQUIRED_ARTIFACTS = ("AC-01", "AC-03", "TR-01")

_SOURCE_FOR = {
    "PG": SourceKind.CONSULTATION_RECORD,
    "ID": SourceKind.POLICY,
    "TR": SourceKind.MODEL_CARD,
    "AC": SourceKind.POLICY,
}


def cohort_indicators() -> tuple[IndicatorDef, ...]:
    return tuple(IndicatorDef(i, Pillar(i[:2]), kind, title) for i, kind, title in CODEBOOK)


def cohort_subjects() -> tuple[Subject, ...]:
    subjects = []
    letters = "ABCDEFGHIJKL"
    for k, letter in enumerate(letters, start=1):
        pid = f"prov-{k:02d}"
        subjects.append(Subject(pid, f"Synthetic Provider {letter}", SubjectKind.PROVIDER))
        if k <= 4:
            for m in (1, 2):
                subjects.append(Subject(f"{pid}-sys{m}", f"Provider {letter} system {m}",
                                        SubjectKind.SYSTEM, pid))
    return tuple(subjects)


def _random_value(rng: random.Random, kind: IndicatorKind, strength: float):
    if kind is B:
        return "yes" if rng.random() < 0.15 + 0.45 * strength else "no"
    if kind is O:
        return rng.choices((0, 1, 2), weights=(2.0 - strength, 1.0, 0.1 + 0.8 * strength))[0]
    return int(rng.random() * (4 + 30 * strength) ** rng.random())


def _lower(value):
    if value == "yes":
        return "no"
    if isinstance(value, int) and value > 0:
        return value - 1
    return value


def make_cohort(seed: int = COHORT_SEED) -> Dataset:
    """The bundled synthetic cohort (12 providers, 4 of them with two systems)."""
    rng = random.Random(seed)
    indicators = cohort_indicators()
    subjects = cohort_subjects()
    skeleton = Dataset(indicators=indicators, subjects=subjects)
    scored = skeleton.scored_subjects()
    double = set(select_sample(skeleton, *COHORT_SAMPLE))

    artifacts: list[EvidenceArtifact] = []
    codes: list[RawCode] = []
    for s_idx, subj in enumerate(scored):
        # coverage between ~15% and ~45%, strength loosely tied to coverage
        coverage = 0.15 + 0.30 * rng.random()
        strength = min(1.0, max(0.0, coverage * 1.6 + rng.uniform(-0.2, 0.2)))
        known_ids = {ind.id for ind in indicators if rng.random() < coverage}
        for p in PILLARS:
            pillar_ids = [ind.id for ind in indicators if ind.pillar is p]
            if not known_ids.intersection(pillar_ids):
                known_ids.add(rng.choice(pillar_ids))
        for ind in indicators:
            key = (subj.subject_id, ind.id)
            coded = date(2025, 5, 5) + timedelta(days=rng.randrange(0, 140))
            if ind.id not in known_ids:
                codes.append(RawCode(subj.subject_id, ind.id, "coder-1", UNKNOWN, coded))
                if key in double:
                    codes.append(RawCode(subj.subject_id, ind.id, "coder-2", UNKNOWN, coded))
                continue
            art_id = f"art-{subj.subject_id}-{ind.id}"
            stale = rng.random() < 0.08
            published = (date(2021, 3, 1) + timedelta(days=rng.randrange(0, 400)) if stale
                         else date(2024, 1, 1) + timedelta(days=rng.randrange(0, 600)))
            artifacts.append(EvidenceArtifact(
                artifact_id=art_id,
                url=f"https://evidence.example.org/{subj.subject_id}/{ind.id.lower()}",
                retrieved_date=date(2025, 5, 1) + timedelta(days=rng.randrange(0, 150)),
                source_kind=_SOURCE_FOR[ind.pillar.value],
                published_date=None if rng.random() < 0.06 else published,
                archive_url=(f"https://archive.example.org/{art_id}" if rng.random() < 0.5 else None),
            ))
            cls = EvidenceClass.THIRD_PARTY if rng.random() < 0.15 else EvidenceClass.PRIMARY
            value = _random_value(rng, ind.kind, strength)
            codes.append(RawCode(subj.subject_id, ind.id, "coder-1", value, coded, (art_id,), cls, stale))
            if key in double:
                r = rng.random()
                second = value if r < 0.8 else (_lower(value) if r < 0.95 else UNKNOWN)
                refs = () if second == UNKNOWN else (art_id,)
                codes.append(RawCode(subj.subject_id, ind.id, "coder-2", second, coded, refs,
                                     None if second == UNKNOWN else cls, stale))
    return Dataset(indicators, subjects, tuple(artifacts), tuple(codes))


def cohort_config_json(version: str = "0.1.0") -> dict:
    return {
        "version": version,
        "cutoff_date": COHORT_CUTOFF.isoformat(),
        "floors": {
            "min_overall_evid": 0.25,
            "min_pillar_evid": 0.15,
            "min_pillar_coverage": 0.25,
            "min_mean_coverage": 0.30,
            "required_artifacts": list(REQUIRED_ARTIFACTS),
        },
        "seeds": {"sampling": COHORT_SAMPLE[1], "bootstrap": 11},
        "sample_fraction": COHORT_SAMPLE[0],
        "n_resamples": 1000,
        "n_bins": 5,
    }


def random_dataset(rng: random.Random, n_subjects: tuple[int, int] = (2, 20),
                   n_indicators: tuple[int, int] = (4, 40),
                   n_coders: int = 1) -> Dataset:
    """A random valid dataset with mixed kinds and a random Unknown rate in [0, 1]."""
    n_ind = rng.randint(*n_indicators)
    pillars = list(PILLARS) + [rng.choice(PILLARS) for _ in range(n_ind - 4)]
    per_pillar: dict[Pillar, int] = {p: 0 for p in PILLARS}
    indicators = []
    for p in pillars:
        per_pillar[p] += 1
        indicators.append(IndicatorDef(f"{p.value}-{per_pillar[p]:02d}", p, rng.choice(list(IndicatorKind))))

    n_sub = rng.randint(*n_subjects)
    subjects: list[Subject] = []
    providers: list[str] = []
    for k in range(n_sub):
        if providers and rng.random() < 0.4:
            subjects.append(Subject(f"s{k:02d}", f"system {k}", SubjectKind.SYSTEM, rng.choice(providers)))
        else:
            subjects.append(Subject(f"s{k:02d}", f"provider {k}", SubjectKind.PROVIDER))
            providers.append(f"s{k:02d}")

    unknown_rate = rng.random()
    artifact = EvidenceArtifact("a0", "https://evidence.example.org/a0", date(2025, 6, 1),
                                SourceKind.OTHER, date(2025, 1, 1))
    skeleton = Dataset(tuple(indicators), tuple(subjects))
    codes = []
    for subj in skeleton.scored_subjects():
        for ind in indicators:
            for c in range(n_coders):
                coded = date(2025, 7, 1)
                if rng.random() < unknown_rate:
                    codes.append(RawCode(subj.subject_id, ind.id, f"c{c}", UNKNOWN, coded))
                    continue
                if ind.kind is B:
                    value = rng.choice(("yes", "no"))
                elif ind.kind is O:
                    value = rng.randint(0, 2)
                else:
                    value = int(rng.expovariate(0.1))
                cls = rng.choice(list(EvidenceClass))
                codes.append(RawCode(subj.subject_id, ind.id, f"c{c}", value, coded, ("a0",), cls,
                                     rng.random() < 0.1))
    return Dataset(tuple(indicators), tuple(subjects), (artifact,), tuple(codes))


def write_cohort(path: str | Path) -> None:
    import json

    root = Path(path)
    write_dataset(make_cohort(), root)
    (root.parent / "release.json").write_text(
        json.dumps(cohort_config_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


if __name__ == "__main__":
    write_cohort(sys.argv[1] if len(sys.argv) > 1 else "fixtures/cohort")
