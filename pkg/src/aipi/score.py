"""Pillar, subject and provider scores under three treatments of Unknown.

* evidence  (``s_evid``):  Unknown counts as 0, a lower bound;
* known-only (``s_known``): mean over indicators with evidence;
* optimistic (``s_opt``):  Unknown counts as 1, an upper bound.

Normalized values carry 9 decimals, so every level is computed exactly,
as rationals in units of 1e-9, from those values. Only the reported
figures are rounded (half-even, 9 decimals); rounding never compounds
from pillar to subject to provider.
"""

from __future__ import annotations

import math
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from aipi.canonical import NANO, from_nanos, to_nanos
from aipi.errors import AipiError
from aipi.evidence_model import (
    PILLARS,
    AdjudicatedCode,
    Dataset,
    EvidenceClass,
    IndicatorDef,
    Pillar,
    Subject,
    SubjectKind,
)
from aipi.normalize import normalize_code

EQUAL_WEIGHTS: dict[Pillar, float] = {p: 0.25 for p in PILLARS}

TREATMENTS = ("evid", "known", "opt")


@dataclass(frozen=True)
class PillarScore:
    pillar: Pillar
    s_evid: float
    s_known: float | None
    s_opt: float
    coverage: float
    coverage_min: float
    coverage_max: float
    n_indicators: int
    n_known: int
    # unrounded values in nano units, keyed by evid/known/opt/coverage
    exact: Mapping[str, Fraction | None] | None = field(default=None, compare=False, repr=False)

    def to_json(self) -> dict[str, Any]:
        return {
            "pillar": self.pillar.value,
            "s_evid": self.s_evid,
            "s_known": self.s_known,
            "s_opt": self.s_opt,
            "coverage": self.coverage,
            "coverage_min": self.coverage_min,
            "coverage_max": self.coverage_max,
            "n_indicators": self.n_indicators,
            "n_known": self.n_known,
        }


@dataclass(frozen=True)
class SubjectScore:
    subject_id: str
    pillars: Mapping[Pillar, PillarScore]
    aipi_evid: float
    aipi_known: float | None
    aipi_opt: float
    mean_coverage: float
    exact: Mapping[str, Fraction | None] | None = field(default=None, compare=False, repr=False)

    def to_json(self) -> dict[str, Any]:
        return {
            "subject_id": self.subject_id,
            "pillars": {p.value: self.pillars[p].to_json() for p in PILLARS},
            "aipi_evid": self.aipi_evid,
            "aipi_known": self.aipi_known,
            "aipi_opt": self.aipi_opt,
            "mean_coverage": self.mean_coverage,
        }


@dataclass(frozen=True)
class ProviderScore:
    provider_id: str
    aipi_evid: float
    aipi_known: float | None
    aipi_opt: float
    k_systems: int
    system_ids: tuple[str, ...] = ()
    mean_coverage: float = 0.0
    # per-pillar known-only means over systems, for the stacked report
    pillar_known: Mapping[Pillar, float | None] = field(default_factory=dict)
    pillar_known_exact: Mapping[Pillar, Fraction | None] | None = field(
        default=None, compare=False, repr=False)

    def to_json(self) -> dict[str, Any]:
        return {
            "provider_id": self.provider_id,
            "aipi_evid": self.aipi_evid,
            "aipi_known": self.aipi_known,
            "aipi_opt": self.aipi_opt,
            "k_systems": self.k_systems,
            "system_ids": list(self.system_ids),
            "mean_coverage": self.mean_coverage,
            "pillar_known": {p.value: self.pillar_known.get(p) for p in PILLARS},
        }


_FIELDS = {
    PillarScore: {"evid": "s_evid", "known": "s_known", "opt": "s_opt", "coverage": "coverage"},
    SubjectScore: {"evid": "aipi_evid", "known": "aipi_known", "opt": "aipi_opt",
                   "coverage": "mean_coverage"},
}


def _exact(score: PillarScore | SubjectScore, name: str) -> Fraction | None:
    """Unrounded nano value, falling back to the reported figure."""
    if score.exact is not None:
        return score.exact[name]
    v = getattr(score, _FIELDS[type(score)][name])
    return None if v is None else Fraction(to_nanos(v))


def _report(x: Fraction | None) -> float | None:
    # round() on a Fraction is half-even
    return None if x is None else from_nanos(round(x))


def _mean(xs: Sequence[Fraction | None]) -> Fraction | None:
    if any(x is None for x in xs):
        return None
    return sum(xs, Fraction(0)) / len(xs)


def pillar_scores(values: Mapping[str, float | None], defs: Sequence[IndicatorDef],
                  classes: Mapping[str, EvidenceClass | None] | None = None) -> PillarScore:
    """Score one pillar from its indicators' normalized values (``None`` = unknown)."""
    if not defs:
        raise AipiError("E_EMPTY_PILLAR", "pillar has no indicators")
    pillars = {d.pillar for d in defs}
    if len(pillars) != 1:
        raise AipiError("E_MIXED_PILLAR", f"indicators span pillars {sorted(p.value for p in pillars)}")
    classes = classes or {}
    n = len(defs)
    known: list[int] = []
    n_primary = 0
    for d in defs:
        if d.id not in values:
            raise AipiError("E_MISSING_VALUE", f"no value supplied for {d.id}")
        v = values[d.id]
        if v is None:
            continue
        if not 0.0 <= v <= 1.0 or math.isnan(v):
            raise AipiError("E_VALUE_DOMAIN", f"{d.id}: normalized value {v} outside [0, 1]")
        known.append(to_nanos(v))
        if classes.get(d.id) is EvidenceClass.PRIMARY:
            n_primary += 1
    k = len(known)
    total = sum(known)
    exact = {
        "evid": Fraction(total, n),
        "known": Fraction(total, k) if k else None,
        "opt": Fraction(total + (n - k) * NANO, n),
        "coverage": Fraction(k * NANO, n),
    }
    return PillarScore(
        pillar=next(iter(pillars)),
        s_evid=_report(exact["evid"]),
        s_known=_report(exact["known"]),
        s_opt=_report(exact["opt"]),
        coverage=_report(exact["coverage"]),
        coverage_min=_report(Fraction(n_primary * NANO, n)),
        coverage_max=_report(exact["coverage"]),
        n_indicators=n,
        n_known=k,
        exact=exact,
    )


def check_weights(weights: Mapping[Pillar, float]) -> dict[Pillar, float]:
    w = {Pillar(p): float(v) for p, v in weights.items()}
    if set(w) != set(PILLARS):
        raise AipiError("E_BAD_WEIGHTS", "weights must name each of the four pillars")
    if any(v < 0 or not math.isfinite(v) for v in w.values()) or abs(sum(w.values()) - 1) > 1e-9:
        raise AipiError("E_BAD_WEIGHTS", f"weights must be non-negative and sum to 1: {w}")
    return w


def _weighted(values: Mapping[Pillar, Fraction | None], weights: Mapping[Pillar, Fraction]) -> Fraction | None:
    if any(values[p] is None for p in PILLARS):
        return None
    return sum((weights[p] * values[p] for p in PILLARS), Fraction(0))


def subject_score(subject_id: str, pillars: Mapping[Pillar, PillarScore] | Sequence[PillarScore],
                  weights: Mapping[Pillar, float] | None = None) -> SubjectScore:
    """Overall AIPI triple as the weighted mean of the four pillar triples.

    ``aipi_known`` is undefined when any pillar's known-only score is.
    """
    if not isinstance(pillars, Mapping):
        seq = list(pillars)
        pillars = {ps.pillar: ps for ps in seq}
        if len(pillars) != len(seq):
            raise AipiError("E_DUPLICATE_PILLAR", f"{subject_id}: a pillar appears twice")
    missing = [p.value for p in PILLARS if p not in pillars]
    if missing:
        raise AipiError("E_MISSING_PILLAR", f"{subject_id}: no score for {', '.join(missing)}")
    w = check_weights(weights) if weights is not None else EQUAL_WEIGHTS
    # Fraction(0.25) is exact; other float weights enter at their binary value
    fw = {p: Fraction(w[p]) for p in PILLARS}
    exact = {t: _weighted({p: _exact(pillars[p], t) for p in PILLARS}, fw)
             for t in ("evid", "known", "opt")}
    exact["coverage"] = _mean([_exact(pillars[p], "coverage") for p in PILLARS])
    return SubjectScore(
        subject_id=subject_id,
        pillars={p: pillars[p] for p in PILLARS},
        aipi_evid=_report(exact["evid"]),
        aipi_known=_report(exact["known"]),
        aipi_opt=_report(exact["opt"]),
        mean_coverage=_report(exact["coverage"]),
        exact=exact,
    )


def provider_score(provider: Subject, systems: Sequence[tuple[Subject, SubjectScore]],
                   own: SubjectScore | None = None) -> ProviderScore:
    """Unweighted mean over a provider's K systems.

    With no systems the provider's own subject score passes through.
    """
    if provider.kind is not SubjectKind.PROVIDER:
        raise AipiError("E_NOT_PROVIDER", f"{provider.subject_id} is not a provider")
    for subj, sc in systems:
        if subj.provider_id != provider.subject_id:
            raise AipiError("E_WRONG_PROVIDER",
                            f"{subj.subject_id} belongs to {subj.provider_id}, not {provider.subject_id}")
        if sc.subject_id != subj.subject_id:
            raise AipiError("E_WRONG_PROVIDER", f"score for {sc.subject_id} paired with {subj.subject_id}")
    if not systems:
        if own is None or own.subject_id != provider.subject_id:
            raise AipiError("E_NO_SCORE", f"provider {provider.subject_id} has no systems and no own score")
        return ProviderScore(
            provider_id=provider.subject_id,
            aipi_evid=own.aipi_evid,
            aipi_known=own.aipi_known,
            aipi_opt=own.aipi_opt,
            k_systems=0,
            mean_coverage=own.mean_coverage,
            pillar_known={p: own.pillars[p].s_known for p in PILLARS},
            pillar_known_exact={p: _exact(own.pillars[p], "known") for p in PILLARS},
        )
    scores = [sc for _, sc in sorted(systems, key=lambda pair: pair[0].subject_id)]
    mean_of = lambda t: _report(_mean([_exact(s, t) for s in scores]))  # noqa: E731
    known = {p: _mean([_exact(s.pillars[p], "known") for s in scores]) for p in PILLARS}
    return ProviderScore(
        provider_id=provider.subject_id,
        aipi_evid=mean_of("evid"),
        aipi_known=mean_of("known"),
        aipi_opt=mean_of("opt"),
        k_systems=len(scores),
        system_ids=tuple(s.subject_id for s in scores),
        mean_coverage=mean_of("coverage"),
        pillar_known={p: _report(known[p]) for p in PILLARS},
        pillar_known_exact=known,
    )


# --------------------------------------------------------------------------
# estimator-guidance floors


@dataclass(frozen=True)
class FloorPolicy:
    """Minimum floors for procurement use of the evidence score.

    The default thresholds are a non-normative starting point.
    ``required_artifacts`` names the indicators that record a vulnerability
    disclosure policy, a redress channel and a current model card.
    """

    min_overall_evid: float = 0.25
    min_pillar_evid: float = 0.15
    min_pillar_coverage: float = 0.25
    min_mean_coverage: float = 0.30
    required_artifacts: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("min_overall_evid", "min_pillar_evid", "min_pillar_coverage", "min_mean_coverage"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 <= v <= 1:
                raise AipiError("E_BAD_POLICY", f"{name} must lie in [0, 1], got {v!r}")
        object.__setattr__(self, "required_artifacts", tuple(sorted(self.required_artifacts)))

    def to_json(self) -> dict[str, Any]:
        return {
            "min_overall_evid": self.min_overall_evid,
            "min_pillar_evid": self.min_pillar_evid,
            "min_pillar_coverage": self.min_pillar_coverage,
            "min_mean_coverage": self.min_mean_coverage,
            "required_artifacts": list(self.required_artifacts),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "FloorPolicy":
        allowed = {"min_overall_evid", "min_pillar_evid", "min_pillar_coverage",
                   "min_mean_coverage", "required_artifacts"}
        extra = set(data) - allowed
        if extra:
            raise AipiError("E_UNKNOWN_FIELD", f"floor policy: unknown fields {sorted(extra)}")
        kwargs = dict(data)
        if "required_artifacts" in kwargs:
            kwargs["required_artifacts"] = tuple(kwargs["required_artifacts"])
        return cls(**kwargs)


@dataclass(frozen=True)
class FloorReason:
    code: str
    target: str | None
    value: float | None
    threshold: float | None

    def to_json(self) -> dict[str, Any]:
        return {"code": self.code, "target": self.target, "value": self.value,
                "threshold": self.threshold}


@dataclass(frozen=True)
class FloorVerdict:
    subject_id: str
    passed: bool
    reasons: tuple[FloorReason, ...]

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_json(self) -> dict[str, Any]:
        return {"subject_id": self.subject_id, "verdict": self.verdict,
                "reasons": [r.to_json() for r in self.reasons]}


def check_floors(score: SubjectScore, policy: FloorPolicy,
                 values: Mapping[str, float | None]) -> FloorVerdict:
    """Pass/fail against ``policy`` with one reason per failed check.

    ``values`` maps every indicator of the release to the subject's
    normalized value; required indicators must be known and above 0.
    """
    unknown_ids = [i for i in policy.required_artifacts if i not in values]
    if unknown_ids:
        raise AipiError("E_UNKNOWN_REQUIRED_ID",
                        f"required indicator(s) not in the release: {', '.join(unknown_ids)}")
    reasons: list[FloorReason] = []
    if score.aipi_evid < policy.min_overall_evid:
        reasons.append(FloorReason("OVERALL_EVID_BELOW_FLOOR", None, score.aipi_evid,
                                   policy.min_overall_evid))
    for p in PILLARS:
        ps = score.pillars[p]
        if ps.s_evid < policy.min_pillar_evid:
            reasons.append(FloorReason("PILLAR_EVID_BELOW_FLOOR", p.value, ps.s_evid,
                                       policy.min_pillar_evid))
    for p in PILLARS:
        ps = score.pillars[p]
        if ps.coverage < policy.min_pillar_coverage:
            reasons.append(FloorReason("PILLAR_COVERAGE_BELOW_FLOOR", p.value, ps.coverage,
                                       policy.min_pillar_coverage))
    if score.mean_coverage < policy.min_mean_coverage:
        reasons.append(FloorReason("MEAN_COVERAGE_BELOW_FLOOR", None, score.mean_coverage,
                                   policy.min_mean_coverage))
    for ind_id in policy.required_artifacts:
        v = values[ind_id]
        if v is None or v <= 0:
            reasons.append(FloorReason("REQ_ARTIFACT_MISSING", ind_id, v, None))
    return FloorVerdict(score.subject_id, not reasons, tuple(reasons))


# --------------------------------------------------------------------------
# whole-dataset scoring


@dataclass(frozen=True)
class ScoreTable:
    """Normalized values as a subjects x indicators matrix (NaN = unknown).

    This is the input the sensitivity analyses perturb.
    """

    subject_ids: tuple[str, ...]
    indicator_ids: tuple[str, ...]
    pillars: tuple[Pillar, ...]
    values: np.ndarray

    def pillar_columns(self, pillar: Pillar) -> np.ndarray:
        return np.array([i for i, p in enumerate(self.pillars) if p is pillar], dtype=int)


def normalize_all(d: Dataset, adjudicated: Mapping[tuple[str, str], AdjudicatedCode],
                  refs: Mapping[str, float]) -> dict[tuple[str, str], float | None]:
    defs = d.indicator_by_id
    return {key: normalize_code(code, defs[key[1]], refs) for key, code in sorted(adjudicated.items())}


def _score_one(d: Dataset, subject_id: str, normalized: Mapping[tuple[str, str], float | None],
               adjudicated: Mapping[tuple[str, str], AdjudicatedCode],
               weights: Mapping[Pillar, float] | None) -> SubjectScore:
    pillars = {}
    for p in PILLARS:
        defs = d.indicators_of(p)
        values = {ind.id: normalized[(subject_id, ind.id)] for ind in defs}
        classes = {ind.id: adjudicated[(subject_id, ind.id)].evidence_class for ind in defs}
        pillars[p] = pillar_scores(values, defs, classes)
    return subject_score(subject_id, pillars, weights)


def score_subjects(d: Dataset, adjudicated: Mapping[tuple[str, str], AdjudicatedCode],
                   normalized: Mapping[tuple[str, str], float | None],
                   weights: Mapping[Pillar, float] | None = None,
                   workers: int = 1) -> dict[str, SubjectScore]:
    """Subject scores for every scored unit, keyed and ordered by subject_id."""
    ids = [s.subject_id for s in d.scored_subjects()]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(lambda sid: _score_one(d, sid, normalized, adjudicated, weights), ids))
    else:
        scores = [_score_one(d, sid, normalized, adjudicated, weights) for sid in ids]
    return dict(zip(ids, scores))


def score_providers(d: Dataset, subject_scores: Mapping[str, SubjectScore]) -> dict[str, ProviderScore]:
    out = {}
    for prov in d.providers():
        systems = [(s, subject_scores[s.subject_id]) for s in d.systems_of(prov.subject_id)]
        out[prov.subject_id] = provider_score(prov, systems, subject_scores.get(prov.subject_id))
    return out


def score_table(d: Dataset, normalized: Mapping[tuple[str, str], float | None]) -> ScoreTable:
    subject_ids = tuple(s.subject_id for s in d.scored_subjects())
    indicator_ids = tuple(ind.id for ind in d.indicators)
    values = np.full((len(subject_ids), len(indicator_ids)), np.nan)
    for i, sid in enumerate(subject_ids):
        for j, iid in enumerate(indicator_ids):
            v = normalized[(sid, iid)]
            if v is not None:
                values[i, j] = v
    return ScoreTable(subject_ids, indicator_ids, tuple(ind.pillar for ind in d.indicators), values)


def subject_values(d: Dataset, normalized: Mapping[tuple[str, str], float | None],
                   subject_id: str) -> dict[str, float | None]:
    return {ind.id: normalized[(subject_id, ind.id)] for ind in d.indicators}


def _split(parts: Mapping[Pillar, Fraction], total: int) -> dict[Pillar, int]:
    """Largest-remainder rounding of ``parts`` so the integers add to ``total``."""
    floors = {p: math.floor(x) for p, x in parts.items()}
    short = total - sum(floors.values())
    order = sorted(parts, key=lambda p: (-(parts[p] - floors[p]), PILLARS.index(p)))
    for p in order[:max(short, 0)]:
        floors[p] += 1
    return floors


def known_only_report(providers: Mapping[str, ProviderScore],
                      weights: Mapping[Pillar, float] | None = None) -> list[dict[str, Any]]:
    """Rows for the known-only provider chart, best first.

    Each pillar contributes its weighted known-only score (a quarter of it
    under equal weights). Contributions are rounded so that they add up to
    ``aipi_known`` exactly. ``coverage`` is the share of indicators with
    evidence.
    """
    w = check_weights(weights) if weights is not None else EQUAL_WEIGHTS
    rows = []
    for pid in sorted(providers):
        ps = providers[pid]
        exact = ps.pillar_known_exact
        if exact is None:
            exact = {p: None if ps.pillar_known.get(p) is None else Fraction(to_nanos(ps.pillar_known[p]))
                     for p in PILLARS}
        if ps.aipi_known is None or any(exact[p] is None for p in PILLARS):
            contrib = {p.value: None for p in PILLARS}
        else:
            nanos = _split({p: Fraction(w[p]) * exact[p] for p in PILLARS}, to_nanos(ps.aipi_known))
            contrib = {p.value: from_nanos(nanos[p]) for p in PILLARS}
        rows.append({
            "provider_id": pid,
            "aipi_known": ps.aipi_known,
            "contributions": contrib,
            "coverage": ps.mean_coverage,
            "k_systems": ps.k_systems,
        })
    rows.sort(key=lambda r: (-(r["aipi_known"] if r["aipi_known"] is not None else -1.0), r["provider_id"]))
    return rows


def render_known_only(rows: Iterable[Mapping[str, Any]], width: int = 40) -> str:
    """Plain-text stacked bars, one character block per pillar."""
    marks = {"PG": "#", "ID": "=", "TR": "+", "AC": "~"}
    lines = [f"{'provider':<20} {'AIPI_known':>10}  {'bar (PG # ID = TR + AC ~)':<{width}}  coverage"]
    for r in rows:
        bar = ""
        for p in PILLARS:
            c = r["contributions"][p.value]
            if c is not None:
                bar += marks[p.value] * int(round(c * width))
        known = "n/a" if r["aipi_known"] is None else f"{r['aipi_known']:.3f}"
        lines.append(f"{r['provider_id']:<20} {known:>10}  {bar:<{width}}  {r['coverage']:.0%}")
    return "\n".join(lines) + "\n"
