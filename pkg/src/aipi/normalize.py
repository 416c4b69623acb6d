"""Map adjudicated codes to [0, 1] values.

Counts go through a tempered log transform anchored at a per-indicator
reference count ``c_ref`` that is frozen with each release, so later
releases can be re-scored on an earlier scale.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Mapping

from aipi import canonical
from aipi.errors import AipiError
from aipi.evidence_model import (
    UNKNOWN,
    AdjudicatedCode,
    Dataset,
    IndicatorDef,
    IndicatorKind,
    adjudicate,
)

PERCENTILE = 95
STALE_CAP = 0.5

CountReferenceTable = dict  # indicator_id -> c_ref (>= 1)


def nearest_rank(sample: Iterable[int], percentile: int = PERCENTILE) -> int | None:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value (1-based)."""
    xs = sorted(sample)
    if not xs:
        return None
    rank = max(1, -(-percentile * len(xs) // 100))
    return xs[rank - 1]


def compute_c_ref(d: Dataset) -> dict[str, int]:
    """Reference count per count-kind indicator of a validated dataset."""
    return c_ref_from_codes(d.indicators, adjudicate(d).values())


def c_ref_from_codes(indicators: Iterable[IndicatorDef],
                     codes: Iterable[AdjudicatedCode]) -> dict[str, int]:
    """Reference count per count-kind indicator, floored at 1."""
    count_ids = sorted(d.id for d in indicators if d.kind is IndicatorKind.COUNT)
    samples: dict[str, list[int]] = {i: [] for i in count_ids}
    for c in codes:
        if c.indicator_id in samples and c.value != UNKNOWN:
            samples[c.indicator_id].append(int(c.value))
    refs = {}
    for ind_id in count_ids:
        p = nearest_rank(samples[ind_id])
        refs[ind_id] = p if p is not None and p >= 1 else 1
    return refs


def count_transform(c: float, c_ref: float) -> float:
    """min(1, log(1 + c) / log(1 + c_ref)), unrounded."""
    if c_ref < 1:
        raise AipiError("E_BAD_CREF", f"c_ref must be >= 1, got {c_ref}")
    if c >= c_ref:
        return 1.0
    return min(1.0, math.log1p(c) / math.log1p(c_ref))


def normalize_code(code: AdjudicatedCode, ind: IndicatorDef,
                   refs: Mapping[str, float] | None = None) -> float | None:
    """Normalized value in [0, 1], or ``None`` for unknown.

    Stale evidence is capped at 0.5 (one rubric level). The result is
    rounded once here, to 9 decimals, half-even.
    """
    value = code.value
    if value == UNKNOWN:
        return None
    kind = ind.kind
    if kind is IndicatorKind.BINARY:
        if value not in ("yes", "no"):
            raise AipiError("E_KIND_MISMATCH", f"{ind.id}: binary value {value!r}")
        s = 1.0 if value == "yes" else 0.0
    elif isinstance(value, str) or isinstance(value, bool):
        raise AipiError("E_KIND_MISMATCH", f"{ind.id}: {kind.value} value {value!r}")
    elif kind is IndicatorKind.ORDINAL3:
        if value not in (0, 1, 2):
            raise AipiError("E_VALUE_DOMAIN", f"{ind.id}: ordinal3 value {value}")
        s = value / 2
    else:
        if value < 0:
            raise AipiError("E_VALUE_DOMAIN", f"{ind.id}: negative count {value}")
        if refs is None or ind.id not in refs:
            raise AipiError("E_MISSING_CREF", f"no c_ref for count indicator {ind.id}")
        s = count_transform(value, refs[ind.id])
    if code.stale and s > STALE_CAP:
        s = STALE_CAP
    return canonical.q9(s)


def check_c_ref(refs: Mapping[str, float], indicators: Iterable[IndicatorDef]) -> None:
    missing = sorted(d.id for d in indicators
                     if d.kind is IndicatorKind.COUNT and d.id not in refs)
    if missing:
        raise AipiError("E_MISSING_CREF", f"frozen c_ref table lacks {', '.join(missing)}")
    for k, v in refs.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v < 1:
            raise AipiError("E_BAD_CREF", f"c_ref for {k} must be a finite number >= 1, got {v!r}")


def c_ref_bytes(refs: Mapping[str, float]) -> bytes:
    return canonical.dump_bytes(dict(refs))


def load_c_ref(path: str | Path) -> dict[str, float]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise AipiError("E_BAD_CREF", f"cannot read c_ref table {path}: {exc}") from None
    if not isinstance(data, dict):
        raise AipiError("E_BAD_CREF", "c_ref.json must be an object of indicator_id -> number")
    return data
