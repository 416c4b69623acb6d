"""Rank stability of the evidence score under perturbation.

All analyses rank the scored units by ``aipi_evid`` recomputed from a
:class:`~aipi.score.ScoreTable`. Recomputed scores are rounded to 9
decimals before ranking so that ties are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal
from itertools import combinations, permutations
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from aipi.canonical import q9
from aipi.errors import AipiError
from aipi.evidence_model import PILLARS, Pillar
from aipi.score import EQUAL_WEIGHTS, ScoreTable, SubjectScore

WEIGHT_STEP = 0.10


@dataclass(frozen=True)
class RankVector:
    """(subject_id, score, rank) triples, best first; ties share the mean rank."""

    entries: tuple[tuple[str, float, float], ...]

    @classmethod
    def from_scores(cls, scores: Mapping[str, float]) -> "RankVector":
        ids = sorted(scores)
        x = np.array([scores[i] for i in ids], dtype=float)
        ranks = rankdata(-x, method="average") if len(ids) else np.array([])
        entries = sorted(zip(ids, x.tolist(), ranks.tolist()), key=lambda e: (-e[1], e[0]))
        return cls(tuple((i, float(s), float(r)) for i, s, r in entries))

    def scores(self) -> dict[str, float]:
        return {i: s for i, s, _ in self.entries}

    def ranks(self) -> dict[str, float]:
        return {i: r for i, _, r in self.entries}


def _as_scores(v: RankVector | Mapping[str, float]) -> dict[str, float]:
    return v.scores() if isinstance(v, RankVector) else dict(v)


def kendall_tau(a: RankVector | Mapping[str, float], b: RankVector | Mapping[str, float]) -> float | None:
    """Kendall's tau-b between two score vectors over the same subjects.

    Returns ``None`` when either vector is constant.
    """
    sa, sb = _as_scores(a), _as_scores(b)
    if set(sa) != set(sb):
        raise AipiError("E_SUBJECT_MISMATCH",
                        f"subject sets differ: {sorted(set(sa) ^ set(sb))}")
    if len(sa) < 2:
        raise AipiError("E_TOO_FEW", "kendall_tau needs at least two subjects")
    ids = sorted(sa)
    x = np.array([sa[i] for i in ids], dtype=float)
    y = np.array([sb[i] for i in ids], dtype=float)
    iu = np.triu_indices(len(ids), k=1)
    dx = np.sign(x[:, None] - x[None, :])[iu]
    dy = np.sign(y[:, None] - y[None, :])[iu]
    untied_x = int(np.count_nonzero(dx))
    untied_y = int(np.count_nonzero(dy))
    if untied_x == 0 or untied_y == 0:
        return None
    s = int(np.dot(dx, dy))
    tau = s / math.sqrt(untied_x * untied_y)
    return max(-1.0, min(1.0, tau))


# --------------------------------------------------------------------------
# recomputation helpers


def _pillar_evid(table: ScoreTable, keep: np.ndarray | None = None) -> dict[Pillar, np.ndarray]:
    """Per-pillar evidence scores (subjects,) with unknown as 0."""
    filled = np.nan_to_num(table.values, nan=0.0)
    out = {}
    for p in PILLARS:
        cols = table.pillar_columns(p)
        if keep is not None:
            cols = cols[keep[cols]]
        if len(cols) == 0:
            raise AipiError("E_EMPTY_PILLAR", f"pillar {p.value} has no indicators left")
        out[p] = filled[:, cols].mean(axis=1)
    return out


def _combine(pillar_vals: Mapping[Pillar, np.ndarray], weights: Mapping[Pillar, float]) -> np.ndarray:
    total = sum(weights[p] * pillar_vals[p] for p in PILLARS if weights[p] != 0)
    return np.round(total, 9)


def _scores(table: ScoreTable, values: np.ndarray) -> dict[str, float]:
    return {sid: float(v) for sid, v in zip(table.subject_ids, values)}


def baseline_evid(table: ScoreTable) -> dict[str, float]:
    return _scores(table, _combine(_pillar_evid(table), EQUAL_WEIGHTS))


def leave_one_pillar_out(table: ScoreTable) -> dict[Pillar, float | None]:
    """tau between the full ranking and the ranking without each pillar."""
    if len(table.subject_ids) < 2:
        raise AipiError("E_TOO_FEW", "need at least two subjects")
    pillar_vals = _pillar_evid(table)
    base = _scores(table, _combine(pillar_vals, EQUAL_WEIGHTS))
    out = {}
    for drop in PILLARS:
        w = {p: (0.0 if p is drop else 1 / 3) for p in PILLARS}
        out[drop] = kendall_tau(base, _scores(table, _combine(pillar_vals, w)))
    return out


def _leave_one_pillar_scores(table: ScoreTable) -> dict[str, dict[str, float]]:
    pillar_vals = _pillar_evid(table)
    return {f"pillar_out:{drop.value}": _scores(table, _combine(
        pillar_vals, {p: (0.0 if p is drop else 1 / 3) for p in PILLARS})) for drop in PILLARS}


@dataclass(frozen=True)
class JackknifeSummary:
    tau_min: float | None
    tau_mean: float | None
    tau_max: float | None
    argmin: str | None
    per_indicator: Mapping[str, float | None]
    skipped: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    def to_json(self) -> dict[str, Any]:
        r = lambda v: None if v is None else round(v, 12)  # noqa: E731
        return {
            "min": r(self.tau_min),
            "mean": r(self.tau_mean),
            "max": r(self.tau_max),
            "argmin": self.argmin,
            "per_indicator": {k: r(v) for k, v in sorted(self.per_indicator.items())},
            "skipped": list(self.skipped),
            "warnings": list(self.warnings),
        }


def _jackknife_scores(table: ScoreTable) -> tuple[dict[str, dict[str, float]], list[str]]:
    out = {}
    skipped = []
    for j, ind_id in enumerate(table.indicator_ids):
        if len(table.pillar_columns(table.pillars[j])) < 2:
            skipped.append(ind_id)
            continue
        keep = np.ones(len(table.indicator_ids), dtype=bool)
        keep[j] = False
        out[ind_id] = _scores(table, _combine(_pillar_evid(table, keep), EQUAL_WEIGHTS))
    return out, skipped


def indicator_jackknife(table: ScoreTable) -> JackknifeSummary:
    """Leave-one-indicator-out tau against the full ranking."""
    base = baseline_evid(table)
    variants, skipped = _jackknife_scores(table)
    per = {ind_id: kendall_tau(base, s) for ind_id, s in variants.items()}
    defined = {k: v for k, v in per.items() if v is not None}
    warnings = tuple(f"W_PILLAR_MIN:{i}" for i in skipped)
    if not defined:
        return JackknifeSummary(None, None, None, None, per, tuple(skipped), warnings)
    argmin = min(sorted(defined), key=defined.__getitem__)
    vals = list(defined.values())
    return JackknifeSummary(
        tau_min=min(vals),
        tau_mean=math.fsum(vals) / len(vals),
        tau_max=max(vals),
        argmin=argmin,
        per_indicator=per,
        skipped=tuple(skipped),
        warnings=warnings,
    )


def weight_grid(base: Mapping[Pillar, float] = EQUAL_WEIGHTS,
                step: float = WEIGHT_STEP) -> dict[str, dict[Pillar, float]]:
    """The 12 perturbations: one pillar up by ``step``, another down, renormalized."""
    grid = {}
    for up, down in permutations(PILLARS, 2):
        w = dict(base)
        w[up] *= 1 + step
        w[down] *= 1 - step
        total = math.fsum(w.values())
        grid[f"{up.value}+{down.value}-"] = {p: w[p] / total for p in PILLARS}
    return grid


def weight_perturbation(table: ScoreTable, step: float = WEIGHT_STEP) -> dict[str, float | None]:
    pillar_vals = _pillar_evid(table)
    base = _scores(table, _combine(pillar_vals, EQUAL_WEIGHTS))
    return {pid: kendall_tau(base, _scores(table, _combine(pillar_vals, w)))
            for pid, w in weight_grid(step=step).items()}


def _weight_scores(table: ScoreTable, step: float = WEIGHT_STEP) -> dict[str, dict[str, float]]:
    pillar_vals = _pillar_evid(table)
    return {f"weights:{pid}": _scores(table, _combine(pillar_vals, w))
            for pid, w in weight_grid(step=step).items()}


def bootstrap_intervals(table: ScoreTable, n_resamples: int, seed: int,
                        level: float = 0.95) -> dict[str, tuple[float, float]]:
    """Percentile intervals for ``aipi_evid`` from indicator resampling.

    Each resample redraws every pillar's indicators with replacement,
    keeping the pillar's size. Endpoints are inverted-CDF quantiles, so they
    are always values some resample actually produced.
    """
    if n_resamples < 100:
        raise AipiError("E_BAD_RESAMPLES", f"n_resamples must be >= 100, got {n_resamples}")
    if not 0 < level < 1:
        raise AipiError("E_BAD_LEVEL", f"level must lie in (0, 1), got {level}")
    rng = np.random.default_rng(seed)
    filled = np.nan_to_num(table.values, nan=0.0)
    total = np.zeros((len(table.subject_ids), n_resamples))
    for p in PILLARS:
        cols = table.pillar_columns(p)
        if len(cols) == 0:
            raise AipiError("E_EMPTY_PILLAR", f"pillar {p.value} has no indicators")
        draws = cols[rng.integers(0, len(cols), size=(n_resamples, len(cols)))]
        total += filled[:, draws].mean(axis=2)
    resampled = np.round(total / 4, 9)
    tail = (1 - level) / 2
    lo = np.quantile(resampled, tail, axis=1, method="inverted_cdf")
    hi = np.quantile(resampled, 1 - tail, axis=1, method="inverted_cdf")
    return {sid: (float(a), float(b)) for sid, a, b in zip(table.subject_ids, lo, hi)}


# --------------------------------------------------------------------------
# coverage dependence and rank flips


@dataclass(frozen=True)
class CoverageBin:
    index: int
    lo: float
    hi: float
    count: int
    mean_evid: float | None
    mean_known: float | None

    def to_json(self) -> dict[str, Any]:
        return {"bin": self.index, "lo": self.lo, "hi": self.hi, "count": self.count,
                "mean_evid": self.mean_evid, "mean_known": self.mean_known}


def _bin_of(coverage: float, n_bins: int) -> int:
    # decimal arithmetic: 0.3 * 10 must land in bin 3, not 2
    k = int(Decimal(repr(coverage)) * n_bins)
    return min(max(k, 0), n_bins - 1)


def _mean(values: Sequence[float]) -> float | None:
    return q9(math.fsum(values) / len(values)) if values else None


def rank_flips(a: Mapping[str, float | None], b: Mapping[str, float | None],
               condition: str) -> list[tuple[str, str, str]]:
    """Pairs ordered strictly one way by ``a`` and strictly the other by ``b``."""
    ids = sorted(k for k in a if a[k] is not None and b.get(k) is not None)
    out = []
    for x, y in combinations(ids, 2):
        if (a[x] - a[y]) * (b[x] - b[y]) < 0:
            out.append((x, y, condition))
    return out


def coverage_dependence(scores: Mapping[str, SubjectScore],
                        n_bins: int) -> tuple[list[CoverageBin], list[tuple[str, str, str]]]:
    """Mean AIPI per equal-width coverage bin, plus evid-vs-known rank flips.

    Coverage here is a subject's mean pillar coverage. The last bin is
    closed on the right.
    """
    if n_bins < 2:
        raise AipiError("E_BAD_BINS", f"n_bins must be >= 2, got {n_bins}")
    members: list[list[SubjectScore]] = [[] for _ in range(n_bins)]
    for sid in sorted(scores):
        members[_bin_of(scores[sid].mean_coverage, n_bins)].append(scores[sid])
    bins = []
    for k, group in enumerate(members):
        known = [s.aipi_known for s in group if s.aipi_known is not None]
        bins.append(CoverageBin(
            index=k,
            lo=q9(k / n_bins),
            hi=q9((k + 1) / n_bins),
            count=len(group),
            mean_evid=_mean([s.aipi_evid for s in group]),
            mean_known=_mean(known),
        ))
    flips = rank_flips({k: s.aipi_evid for k, s in scores.items()},
                       {k: s.aipi_known for k, s in scores.items()}, "evid_vs_known")
    return bins, flips


# --------------------------------------------------------------------------
# full report


@dataclass(frozen=True)
class SensitivityReport:
    tau_leave_one_pillar_out: Mapping[Pillar, float | None]
    tau_indicator_jackknife: JackknifeSummary
    weight_perturbation: Mapping[str, float | None]
    bootstrap: Mapping[str, tuple[float, float]]
    coverage_dependence: Sequence[CoverageBin]
    rank_flips: Sequence[tuple[str, str, str]]
    rank_intervals: Mapping[str, tuple[float, float]]
    n_resamples: int = 0
    seed: int = 0
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def to_json(self) -> dict[str, Any]:
        r = lambda v: None if v is None else round(v, 12)  # noqa: E731
        return {
            "tau_leave_one_pillar_out": {p.value: r(v) for p, v in self.tau_leave_one_pillar_out.items()},
            "tau_indicator_jackknife": self.tau_indicator_jackknife.to_json(),
            "weight_perturbation": {k: r(v) for k, v in sorted(self.weight_perturbation.items())},
            "bootstrap": {"n_resamples": self.n_resamples, "seed": self.seed, "level": 0.95,
                          "intervals": {k: list(v) for k, v in sorted(self.bootstrap.items())}},
            "coverage_dependence": [b.to_json() for b in self.coverage_dependence],
            "rank_flips": [list(f) for f in self.rank_flips],
            "rank_intervals": {k: list(v) for k, v in sorted(self.rank_intervals.items())},
            "warnings": list(self.warnings),
        }


def rank_intervals(conditions: Mapping[str, Mapping[str, float]]) -> dict[str, tuple[float, float]]:
    """Min and max (mean-tie) rank of each subject across all conditions."""
    lo: dict[str, float] = {}
    hi: dict[str, float] = {}
    for scores in conditions.values():
        for sid, rank in RankVector.from_scores(scores).ranks().items():
            lo[sid] = min(lo.get(sid, rank), rank)
            hi[sid] = max(hi.get(sid, rank), rank)
    return {sid: (lo[sid], hi[sid]) for sid in sorted(lo)}


def sensitivity_report(table: ScoreTable, scores: Mapping[str, SubjectScore], n_resamples: int,
                       seed: int, n_bins: int) -> SensitivityReport:
    base = baseline_evid(table)
    lopo_scores = _leave_one_pillar_scores(table)
    jk_scores, _ = _jackknife_scores(table)
    weight_scores = _weight_scores(table)
    conditions = {"baseline": base, **lopo_scores,
                  **{f"indicator_out:{k}": v for k, v in jk_scores.items()}, **weight_scores}
    jackknife = indicator_jackknife(table)
    bins, flips = coverage_dependence(scores, n_bins)
    for name, alt in lopo_scores.items():
        flips.extend(rank_flips(base, alt, name))
    return SensitivityReport(
        tau_leave_one_pillar_out=leave_one_pillar_out(table),
        tau_indicator_jackknife=jackknife,
        weight_perturbation=weight_perturbation(table),
        bootstrap=bootstrap_intervals(table, n_resamples, seed),
        coverage_dependence=bins,
        rank_flips=flips,
        rank_intervals=rank_intervals(conditions),
        n_resamples=n_resamples,
        seed=seed,
        warnings=jackknife.warnings,
    )
