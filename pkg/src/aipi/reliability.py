"""Double-coding sample selection and inter-rater agreement."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Any, Hashable, Mapping, Sequence

import numpy as np

from aipi.errors import AipiError
from aipi.evidence_model import (
    PILLARS,
    UNKNOWN,
    Dataset,
    IndicatorKind,
    merge_codes,
)
from aipi.normalize import normalize_code

_MASK64 = (1 << 64) - 1

DEFAULT_THRESHOLD = 0.667  # conventional content-analysis floor; non-normative


class SplitMix64:
    """Platform-independent 64-bit generator (Steele, Lea & Flood)."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def shuffle(self, items: list) -> list:
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.next() % (i + 1)
            out[i], out[j] = out[j], out[i]
        return out


def _ceil_fraction(fraction: float, size: int) -> int:
    # Fraction(repr(x)) keeps 0.2 as exactly 1/5, so ceil(0.2 * 5) is 1, not 2
    return math.ceil(Fraction(repr(float(fraction))) * size)


def select_sample(d: Dataset, fraction: float, seed: int) -> list[tuple[str, str]]:
    """Stratified (pillar x indicator kind) sample of (subject, indicator) items.

    Each stratum is sorted, shuffled by a seeded splitmix64 Fisher-Yates
    pass, and contributes its first ceil(fraction * size) items.
    """
    if not 0 < fraction <= 1:
        raise AipiError("E_BAD_FRACTION", f"fraction must lie in (0, 1], got {fraction}")
    subjects = [s.subject_id for s in d.scored_subjects()]
    if not subjects or not d.indicators:
        raise AipiError("E_EMPTY", "dataset has no scored subjects or no indicators")
    master = SplitMix64(seed)
    chosen: list[tuple[str, str]] = []
    for pillar in PILLARS:
        for kind in IndicatorKind:
            ids = [ind.id for ind in d.indicators if ind.pillar is pillar and ind.kind is kind]
            # one sub-stream per stratum, drawn even for empty strata so streams stay aligned
            stream = SplitMix64(master.next())
            if not ids:
                continue
            stratum = sorted((s, i) for s in subjects for i in ids)
            take = _ceil_fraction(fraction, len(stratum))
            chosen.extend(stream.shuffle(stratum)[:take])
    return sorted(chosen)


# --------------------------------------------------------------------------
# agreement statistics


def _pairable(units: Sequence[Sequence[Any]]) -> list[list[Any]]:
    out = []
    for unit in units:
        vals = [v for v in unit if v is not None]
        if len(vals) >= 2:
            out.append(vals)
    return out


def alpha_with_reason(units: Sequence[Sequence[Any]], metric: str = "nominal") -> tuple[float | None, str | None]:
    """Krippendorff's alpha and, when undefined, the reason code."""
    if metric not in ("nominal", "interval"):
        raise AipiError("E_BAD_METRIC", f"metric must be nominal or interval, got {metric!r}")
    pairable = _pairable(units)
    if len(pairable) < 2:
        return None, "NO_PAIRABLE_VALUES"
    cats: list[Hashable] = sorted({v for u in pairable for v in u}, key=lambda v: (str(type(v)), v))
    index = {c: k for k, c in enumerate(cats)}
    n_cat = len(cats)
    coincidence = np.zeros((n_cat, n_cat))
    for unit in pairable:
        counts = np.zeros(n_cat)
        for v in unit:
            counts[index[v]] += 1
        coincidence += (np.outer(counts, counts) - np.diag(counts)) / (len(unit) - 1)
    if metric == "nominal":
        delta = 1.0 - np.eye(n_cat)
    else:
        x = np.asarray(cats, dtype=float)
        delta = (x[:, None] - x[None, :]) ** 2
    marginals = coincidence.sum(axis=1)
    n = marginals.sum()
    observed = (coincidence * delta).sum() / n
    expected = (np.outer(marginals, marginals) * delta).sum() / (n * (n - 1))
    if expected == 0:
        return None, "NO_EXPECTED_DISAGREEMENT"
    return float(1.0 - observed / expected), None


def krippendorff_alpha(units: Sequence[Sequence[Any]], metric: str = "nominal") -> float | None:
    """Krippendorff's alpha from the coincidence matrix.

    ``units`` holds one sequence of coder values per item; ``None`` marks a
    missing value. Returns ``None`` when fewer than two items are pairable
    or the data carry no expected disagreement.
    """
    return alpha_with_reason(units, metric)[0]


def percent_agreement(units: Sequence[Sequence[Any]]) -> float:
    """Share of equal coder pairs per item, averaged over multi-coded items."""
    per_item = []
    for unit in units:
        vals = [v for v in unit if v is not None]
        if len(vals) < 2:
            continue
        pairs = list(combinations(vals, 2))
        per_item.append(sum(a == b for a, b in pairs) / len(pairs))
    if not per_item:
        raise AipiError("E_NO_PAIRS", "no item has two or more codes")
    return math.fsum(per_item) / len(per_item)


@dataclass(frozen=True)
class ReliabilityReport:
    alpha_overall: float | None
    alpha_by_kind: Mapping[str, float | None]
    percent_agreement: float | None
    n_items: int
    n_multi_coded: int
    n_coders: int
    sample_manifest: tuple[tuple[str, str], ...]
    seed: int
    fraction: float
    threshold: float = DEFAULT_THRESHOLD
    notes: Mapping[str, str] = field(default_factory=dict)

    @property
    def meets_threshold(self) -> bool | None:
        if self.alpha_overall is None:
            return None
        return self.alpha_overall >= self.threshold

    def to_json(self) -> dict[str, Any]:
        r9 = lambda v: None if v is None else round(v, 9)  # noqa: E731
        return {
            "alpha_overall": r9(self.alpha_overall),
            "alpha_by_kind": {k: r9(v) for k, v in self.alpha_by_kind.items()},
            "percent_agreement": r9(self.percent_agreement),
            "n_items": self.n_items,
            "n_multi_coded": self.n_multi_coded,
            "n_coders": self.n_coders,
            "sample_manifest": [list(x) for x in self.sample_manifest],
            "seed": self.seed,
            "fraction": self.fraction,
            "threshold": self.threshold,
            "meets_threshold": self.meets_threshold,
            "notes": dict(self.notes),
        }


def reliability_report(d: Dataset, refs: Mapping[str, float], fraction: float, seed: int,
                       threshold: float = DEFAULT_THRESHOLD) -> ReliabilityReport:
    """Agreement over the seeded double-coding sample.

    Binary indicators use the nominal metric on raw yes/no values; ordinal
    and count indicators use the interval metric on normalized values. The
    overall alpha pools every kind on the normalized scale. Unknown codes
    are treated as missing for alpha but count as values for percent
    agreement.
    """
    manifest = select_sample(d, fraction, seed)
    by_kind: dict[str, list[list[Any]]] = {k.value: [] for k in IndicatorKind}
    pooled: list[list[Any]] = []
    raw_units: list[list[Any]] = []
    coders: set[str] = set()
    n_multi = 0
    for key in manifest:
        codes = d.codes_by_key.get(key, ())
        if len(codes) >= 2:
            n_multi += 1
        coders.update(c.coder_id for c in codes)
        ind = d.indicator_by_id[key[1]]
        raw_units.append([c.value for c in codes])
        normalized = [normalize_code(merge_codes([c]), ind, refs) for c in codes]
        pooled.append(normalized)
        if ind.kind is IndicatorKind.BINARY:
            by_kind[ind.kind.value].append([None if c.value == UNKNOWN else c.value for c in codes])
        else:
            by_kind[ind.kind.value].append(normalized)
    notes = {}
    alpha_kind = {}
    for kind, units in by_kind.items():
        metric = "nominal" if kind == IndicatorKind.BINARY.value else "interval"
        value, reason = alpha_with_reason(units, metric)
        alpha_kind[kind] = value
        if reason:
            notes[f"alpha_{kind}"] = reason
    overall, reason = alpha_with_reason(pooled, "interval")
    if reason:
        notes["alpha_overall"] = reason
    try:
        agreement = percent_agreement(raw_units)
    except AipiError as exc:
        agreement = None
        notes["percent_agreement"] = exc.code
    return ReliabilityReport(
        alpha_overall=overall,
        alpha_by_kind=alpha_kind,
        percent_agreement=agreement,
        n_items=len(manifest),
        n_multi_coded=n_multi,
        n_coders=len(coders),
        sample_manifest=tuple(manifest),
        seed=seed,
        fraction=fraction,
        threshold=threshold,
        notes=notes,
    )
