"""Deterministic scoring engine for AIPI evidence datasets."""

__version__ = "0.1.0"

from aipi.errors import AipiError, DatasetError
from aipi.evidence_model import (
    Pillar,
    IndicatorKind,
    IndicatorDef,
    EvidenceArtifact,
    Subject,
    RawCode,
    AdjudicatedCode,
    Dataset,
    Violation,
    UNKNOWN,
    parse_dataset,
    load_dataset,
    serialize_dataset,
    validate_dataset,
    merge_codes,
    adjudicate,
    link_check,
)
from aipi.normalize import compute_c_ref, normalize_code, count_transform
from aipi.score import (
    PillarScore,
    SubjectScore,
    ProviderScore,
    FloorPolicy,
    FloorVerdict,
    pillar_scores,
    subject_score,
    provider_score,
    check_floors,
)

__all__ = [
    "__version__",
    "AipiError",
    "DatasetError",
    "Pillar",
    "IndicatorKind",
    "IndicatorDef",
    "EvidenceArtifact",
    "Subject",
    "RawCode",
    "AdjudicatedCode",
    "Dataset",
    "Violation",
    "UNKNOWN",
    "parse_dataset",
    "load_dataset",
    "serialize_dataset",
    "validate_dataset",
    "merge_codes",
    "adjudicate",
    "link_check",
    "compute_c_ref",
    "normalize_code",
    "count_transform",
    "PillarScore",
    "SubjectScore",
    "ProviderScore",
    "FloorPolicy",
    "FloorVerdict",
    "pillar_scores",
    "subject_score",
    "provider_score",
    "check_floors",
]
