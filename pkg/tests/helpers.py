"""Small builders shared by the test modules."""

from __future__ import annotations

from datetime import date
from pathlib import Path

from aipi.evidence_model import (
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
)

ROOT = Path(__file__).resolve().parent.parent
FIXTURE = ROOT / "fixtures" / "cohort"
RELEASE_CONFIG = ROOT / "fixtures" / "release.json"
CUTOFF = date(2025, 9, 30)

B, O, C = IndicatorKind.BINARY, IndicatorKind.ORDINAL3, IndicatorKind.COUNT
FOUR_BINARY = {"PG-01": B, "ID-01": B, "TR-01": B, "AC-01": B}

ARTIFACT = EvidenceArtifact("a1", "https://evidence.example.org/a1", date(2025, 6, 1),
                            SourceKind.POLICY, date(2025, 1, 1))


def code(subject: str, indicator: str, value, coder: str = "c1", stale: bool = False,
         cls: EvidenceClass | None = EvidenceClass.PRIMARY) -> RawCode:
    if value == UNKNOWN:
        return RawCode(subject, indicator, coder, UNKNOWN, date(2025, 7, 1))
    return RawCode(subject, indicator, coder, value, date(2025, 7, 1), ("a1",), cls, stale)


def dataset(values: dict[str, dict[str, object]], kinds: dict[str, IndicatorKind] | None = None,
            systems: dict[str, str] | None = None, stale: set[tuple[str, str]] = frozenset(),
            third_party: set[tuple[str, str]] = frozenset()) -> Dataset:
    """Dataset from ``{subject: {indicator: value}}``.

    Subjects are providers unless ``systems`` maps them to a provider;
    referenced providers are added automatically. Missing pairs stay uncoded.
    """
    kinds = kinds or FOUR_BINARY
    systems = systems or {}
    indicators = tuple(IndicatorDef(i, Pillar(i[:2]), k) for i, k in kinds.items())
    subjects = []
    for sid in sorted(set(values) | set(systems.values())):
        if sid in systems:
            subjects.append(Subject(sid, sid, SubjectKind.SYSTEM, systems[sid]))
        else:
            subjects.append(Subject(sid, sid, SubjectKind.PROVIDER))
    codes = []
    for sid, row in values.items():
        for iid, v in row.items():
            cls = EvidenceClass.THIRD_PARTY if (sid, iid) in third_party else EvidenceClass.PRIMARY
            codes.append(code(sid, iid, v, stale=(sid, iid) in stale, cls=cls))
    return Dataset(indicators, tuple(subjects), (ARTIFACT,), tuple(codes))
