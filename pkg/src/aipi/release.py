"""Deterministic, hash-manifested release builds and release diffs.

A build runs validate -> freeze c_ref -> score -> analyze -> emit and
writes every file through :mod:`aipi.canonical`, so two builds from the same
inputs are byte-identical whatever the worker count. Output is staged in a
temporary sibling directory and moved into place only when complete.
"""

from __future__ import annotations

import json
import re
import shutil
import tempfile
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Any, Mapping

from aipi import __version__, canonical
from aipi.errors import AipiError
from aipi.evidence_model import (
    PILLARS,
    AdjudicatedCode,
    Dataset,
    Pillar,
    Violation,
    adjudicate,
    dataset_hash,
    has_errors,
    load_dataset,
    validate_dataset,
)
from aipi.normalize import c_ref_bytes, c_ref_from_codes, check_c_ref, load_c_ref
from aipi.reliability import DEFAULT_THRESHOLD, ReliabilityReport, reliability_report
from aipi.score import (
    EQUAL_WEIGHTS,
    FloorPolicy,
    FloorVerdict,
    ProviderScore,
    ScoreTable,
    SubjectScore,
    check_floors,
    check_weights,
    known_only_report,
    normalize_all,
    score_providers,
    score_subjects,
    score_table,
    subject_values,
)
from aipi.sensitivity import SensitivityReport, sensitivity_report

FORMAT = "aipi-release/1"
MANIFEST = "manifest.json"

_SEMVER = re.compile(r"^(0|[1-9]\d*)\.(0|[1-9]\d*)\.(0|[1-9]\d*)(?:-[0-9A-Za-z.-]+)?(?:\+[0-9A-Za-z.-]+)?$")


class ValidationFailed(AipiError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        errors = [v for v in violations if v.severity == "error"]
        super().__init__("E_VALIDATION", f"{len(errors)} validation error(s); first: "
                         f"{errors[0].code} at {errors[0].location()}: {errors[0].message}")


def _parse_date(value: Any, what: str) -> date:
    if isinstance(value, date):
        return value
    try:
        if not isinstance(value, str) or len(value) != 10:
            raise ValueError
        return date.fromisoformat(value)
    except ValueError:
        raise AipiError("E_BAD_DATE", f"{what} must be an ISO-8601 date, got {value!r}") from None


@dataclass(frozen=True)
class ReleaseConfig:
    version: str
    cutoff_date: date
    floors: FloorPolicy = field(default_factory=FloorPolicy)
    seeds: Mapping[str, int] = field(default_factory=lambda: {"sampling": 0, "bootstrap": 0})
    sample_fraction: float = 0.2
    n_resamples: int = 1000
    n_bins: int = 5
    weights: Mapping[Pillar, float] = field(default_factory=lambda: dict(EQUAL_WEIGHTS))
    reliability_threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if not _SEMVER.match(self.version):
            raise AipiError("E_BAD_VERSION", f"version must be semantic (e.g. 0.1.0), got {self.version!r}")
        object.__setattr__(self, "cutoff_date", _parse_date(self.cutoff_date, "cutoff_date"))
        seeds = dict(self.seeds)
        for k in ("sampling", "bootstrap"):
            if not isinstance(seeds.get(k), int) or isinstance(seeds.get(k), bool) or seeds[k] < 0:
                raise AipiError("E_BAD_CONFIG", f"seeds.{k} must be a non-negative integer")
        object.__setattr__(self, "seeds", seeds)
        object.__setattr__(self, "weights", check_weights(self.weights))
        if not 0 < self.sample_fraction <= 1:
            raise AipiError("E_BAD_CONFIG", "sample_fraction must lie in (0, 1]")
        if self.n_resamples < 100:
            raise AipiError("E_BAD_CONFIG", "n_resamples must be >= 100")
        if self.n_bins < 2:
            raise AipiError("E_BAD_CONFIG", "n_bins must be >= 2")
        if not 0 <= self.reliability_threshold <= 1:
            raise AipiError("E_BAD_CONFIG", "reliability_threshold must lie in [0, 1]")

    def to_json(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "cutoff_date": self.cutoff_date.isoformat(),
            "floors": self.floors.to_json(),
            "seeds": dict(sorted(self.seeds.items())),
            "sample_fraction": self.sample_fraction,
            "n_resamples": self.n_resamples,
            "n_bins": self.n_bins,
            "weights": {p.value: self.weights[p] for p in PILLARS},
            "reliability_threshold": self.reliability_threshold,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "ReleaseConfig":
        allowed = {"version", "cutoff_date", "floors", "seeds", "sample_fraction", "n_resamples",
                   "n_bins", "weights", "reliability_threshold"}
        extra = set(data) - allowed
        if extra:
            raise AipiError("E_UNKNOWN_FIELD", f"config: unknown fields {sorted(extra)}")
        missing = {"version", "cutoff_date"} - set(data)
        if missing:
            raise AipiError("E_MISSING_FIELD", f"config: missing {sorted(missing)}")
        kwargs = dict(data)
        if "floors" in kwargs:
            kwargs["floors"] = FloorPolicy.from_json(kwargs["floors"])
        if "weights" in kwargs:
            try:
                kwargs["weights"] = {Pillar(k): v for k, v in kwargs["weights"].items()}
            except ValueError as exc:
                raise AipiError("E_BAD_WEIGHTS", str(exc)) from None
        return cls(**kwargs)

    def config_hash(self) -> str:
        return canonical.canonical_hash(self.to_json())


def load_config(path: str | Path) -> ReleaseConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise AipiError("E_BAD_CONFIG", f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise AipiError("E_BAD_CONFIG", "config must be a JSON object")
    return ReleaseConfig.from_json(data)


# --------------------------------------------------------------------------
# pipeline


@dataclass
class Results:
    dataset: Dataset
    violations: list[Violation]
    adjudicated: dict[tuple[str, str], AdjudicatedCode]
    c_ref: dict[str, float]
    normalized: dict[tuple[str, str], float | None]
    subject_scores: dict[str, SubjectScore]
    provider_scores: dict[str, ProviderScore]
    table: ScoreTable
    floor_verdicts: dict[str, FloorVerdict] | None = None
    reliability: ReliabilityReport | None = None
    sensitivity: SensitivityReport | None = None
    weights: Mapping[Pillar, float] = field(default_factory=lambda: dict(EQUAL_WEIGHTS))


def check_dataset(d: Dataset, cutoff: date | None) -> list[Violation]:
    """Validate and raise :class:`ValidationFailed` on any error."""
    violations = validate_dataset(d, cutoff if cutoff is not None else date.max)
    if has_errors(violations):
        raise ValidationFailed(violations)
    return violations


def score_dataset(d: Dataset, config: ReleaseConfig | None = None,
                  c_ref: Mapping[str, float] | None = None, workers: int = 1,
                  violations: list[Violation] | None = None) -> Results:
    """Adjudicate, normalize and score. ``c_ref`` freezes the count scale."""
    weights = config.weights if config else EQUAL_WEIGHTS
    adjudicated = adjudicate(d)
    if c_ref is None:
        refs = c_ref_from_codes(d.indicators, adjudicated.values())
    else:
        check_c_ref(c_ref, d.indicators)
        refs = dict(c_ref)
    normalized = normalize_all(d, adjudicated, refs)
    subjects = score_subjects(d, adjudicated, normalized, weights, workers)
    return Results(
        dataset=d,
        violations=violations or [],
        adjudicated=adjudicated,
        c_ref=dict(sorted(refs.items())),
        normalized=normalized,
        subject_scores=subjects,
        provider_scores=score_providers(d, subjects),
        table=score_table(d, normalized),
        weights=dict(weights),
    )


def add_floors(res: Results, policy: FloorPolicy) -> None:
    res.floor_verdicts = {
        sid: check_floors(sc, policy, subject_values(res.dataset, res.normalized, sid))
        for sid, sc in res.subject_scores.items()
    }


def add_reliability(res: Results, config: ReleaseConfig) -> None:
    res.reliability = reliability_report(res.dataset, res.c_ref, config.sample_fraction,
                                         config.seeds["sampling"], config.reliability_threshold)


def add_sensitivity(res: Results, config: ReleaseConfig) -> None:
    res.sensitivity = sensitivity_report(res.table, res.subject_scores, config.n_resamples,
                                         config.seeds["bootstrap"], config.n_bins)


def run_pipeline(d: Dataset, config: ReleaseConfig, c_ref: Mapping[str, float] | None = None,
                 workers: int = 1) -> Results:
    violations = check_dataset(d, config.cutoff_date)
    res = score_dataset(d, config, c_ref, workers, violations)
    add_floors(res, config.floors)
    add_reliability(res, config)
    add_sensitivity(res, config)
    return res


# --------------------------------------------------------------------------
# rendering


SCORE_FIELDS = ("s_evid", "s_known", "s_opt", "coverage", "coverage_min", "coverage_max",
                "n_indicators", "n_known")
CSV_HEADER = ("subject_id", "kind", "provider_id", "level") + SCORE_FIELDS


def scores_doc(res: Results) -> dict[str, Any]:
    subjects = []
    for sid, sc in res.subject_scores.items():
        subj = res.dataset.subject_by_id[sid]
        entry = sc.to_json()
        entry["kind"] = subj.kind.value
        entry["provider_id"] = subj.provider_id
        subjects.append(entry)
    return {"subjects": subjects}


def scores_csv(res: Results) -> bytes:
    rows = []
    for sid, sc in res.subject_scores.items():
        subj = res.dataset.subject_by_id[sid]
        head = (sid, subj.kind.value, subj.provider_id)
        for p in PILLARS:
            ps = sc.pillars[p]
            rows.append(head + (p.value,) + tuple(getattr(ps, f) for f in SCORE_FIELDS))
        n_ind = sum(sc.pillars[p].n_indicators for p in PILLARS)
        n_known = sum(sc.pillars[p].n_known for p in PILLARS)
        cov_min = canonical.q9(sum(sc.pillars[p].coverage_min for p in PILLARS) / 4)
        cov_max = canonical.q9(sum(sc.pillars[p].coverage_max for p in PILLARS) / 4)
        rows.append(head + ("overall", sc.aipi_evid, sc.aipi_known, sc.aipi_opt, sc.mean_coverage,
                            cov_min, cov_max, n_ind, n_known))
    return canonical.csv_bytes(CSV_HEADER, rows)


def adjudicated_doc(res: Results) -> list[dict[str, Any]]:
    out = []
    for (sid, iid), code in sorted(res.adjudicated.items()):
        out.append({
            "subject_id": sid,
            "indicator_id": iid,
            "value": code.value,
            "normalized": res.normalized[(sid, iid)],
            "evidence_class": None if code.evidence_class is None else code.evidence_class.value,
            "stale": code.stale,
            "evidence_refs": list(code.evidence_refs),
            "contributing_coders": list(code.contributing_coders),
            "conflict_resolved": code.conflict_resolved,
        })
    return out


def coverage_csv(report: SensitivityReport) -> bytes:
    rows = [(b.index, b.lo, b.hi, b.count, b.mean_evid, b.mean_known) for b in report.coverage_dependence]
    return canonical.csv_bytes(("bin", "lo", "hi", "count", "mean_evid", "mean_known"), rows)


def violations_bytes(violations: list[Violation]) -> bytes:
    return canonical.dump_bytes([v.to_json() for v in violations])


def render_files(res: Results) -> dict[str, bytes]:
    """Every release file except the manifest, as canonical bytes."""
    files = {
        "violations.json": violations_bytes(res.violations),
        "c_ref.json": c_ref_bytes(res.c_ref),
        "adjudicated.json": canonical.dump_bytes(adjudicated_doc(res)),
        "scores.json": canonical.dump_bytes(scores_doc(res)),
        "scores.csv": scores_csv(res),
        "providers.json": canonical.dump_bytes(
            {"providers": [p.to_json() for _, p in sorted(res.provider_scores.items())]}),
        "known_only_report.json": canonical.dump_bytes(
            {"rows": known_only_report(res.provider_scores, res.weights)}),
    }
    if res.floor_verdicts is not None:
        files["floor_verdicts.json"] = canonical.dump_bytes(
            {"verdicts": [v.to_json() for _, v in sorted(res.floor_verdicts.items())]})
    if res.reliability is not None:
        files["reliability.json"] = canonical.dump_bytes(res.reliability.to_json())
    if res.sensitivity is not None:
        files["sensitivity.json"] = canonical.dump_bytes(res.sensitivity.to_json())
        files["coverage_dependence.csv"] = coverage_csv(res.sensitivity)
    return files


def make_manifest(files: Mapping[str, bytes], config: ReleaseConfig, d: Dataset) -> dict[str, Any]:
    return {
        "format": FORMAT,
        "version": config.version,
        "cutoff_date": config.cutoff_date.isoformat(),
        "config_hash": config.config_hash(),
        "dataset_hash": dataset_hash(d),
        "files": {name: canonical.sha256_hex(data) for name, data in sorted(files.items())},
        "tool_version": __version__,
        "seed_registry": {"reliability_sample": config.seeds["sampling"],
                          "bootstrap": config.seeds["bootstrap"]},
    }


def write_outputs(files: Mapping[str, bytes], out_dir: str | Path) -> Path:
    """Write ``files`` into ``out_dir`` atomically: all files or nothing.

    An existing directory is replaced only if it is empty or a previous
    release (carries a manifest).
    """
    out = Path(out_dir)
    if out.exists():
        if not out.is_dir() or (any(out.iterdir()) and not (out / MANIFEST).is_file()):
            raise AipiError("E_OUT_EXISTS", f"{out} exists and is not a release directory")
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        for name, data in sorted(files.items()):
            (staging / name).write_bytes(data)
        if out.exists():
            shutil.rmtree(out)
        staging.rename(out)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return out


def build_release(dataset_dir: str | Path, config: ReleaseConfig, out_dir: str | Path,
                  workers: int = 1) -> dict[str, Any]:
    """Build a release directory and return its manifest.

    Parse or validation errors raise before anything is written.
    """
    d = load_dataset(dataset_dir)
    res = run_pipeline(d, config, workers=workers)
    files = render_files(res)
    manifest = make_manifest(files, config, d)
    files[MANIFEST] = canonical.dump_bytes(manifest)
    write_outputs(files, out_dir)
    return manifest


def rescore_against(dataset_dir: str | Path, frozen_c_ref: Mapping[str, float] | str | Path,
                    config: ReleaseConfig | None = None, workers: int = 1) -> dict[str, SubjectScore]:
    """Score a dataset on a prior release's frozen count scale."""
    refs = frozen_c_ref if isinstance(frozen_c_ref, Mapping) else load_c_ref(frozen_c_ref)
    d = load_dataset(dataset_dir)
    violations = check_dataset(d, config.cutoff_date if config else None)
    return score_dataset(d, config, refs, workers, violations).subject_scores


# --------------------------------------------------------------------------
# verification and diff


def verify_release(path: str | Path) -> dict[str, Any]:
    """Load a manifest and check every digest. Raises ``E_TAMPERED`` on mismatch."""
    root = Path(path)
    try:
        manifest = json.loads((root / MANIFEST).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise AipiError("E_BAD_RELEASE", f"{root}: unreadable manifest: {exc}") from None
    files = manifest.get("files")
    if manifest.get("format") != FORMAT or not isinstance(files, dict):
        raise AipiError("E_BAD_RELEASE", f"{root}: not an {FORMAT} manifest")
    present = {p.name for p in root.iterdir() if p.is_file()} - {MANIFEST}
    if present != set(files):
        raise AipiError("E_TAMPERED", f"{root}: file list differs from manifest: "
                        f"{sorted(present ^ set(files))}")
    for name, digest in sorted(files.items()):
        if canonical.sha256_hex((root / name).read_bytes()) != digest:
            raise AipiError("E_TAMPERED", f"{root}: digest mismatch for {name}")
    return manifest


@dataclass
class ReleaseDiff:
    metadata: dict[str, Any] = field(default_factory=dict)
    subjects_added: list[str] = field(default_factory=list)
    subjects_removed: list[str] = field(default_factory=list)
    scores: dict[str, dict[str, dict[str, Any]]] = field(default_factory=dict)
    providers: dict[str, dict[str, Any]] = field(default_factory=dict)
    indicators: list[dict[str, Any]] = field(default_factory=list)
    c_ref: dict[str, Any] = field(default_factory=dict)

    @property
    def is_empty(self) -> bool:
        return not (self.metadata or self.subjects_added or self.subjects_removed or self.scores
                    or self.providers or self.indicators or self.c_ref)

    @property
    def has_score_changes(self) -> bool:
        return bool(self.scores or self.providers or self.subjects_added or self.subjects_removed)

    def to_json(self) -> dict[str, Any]:
        return {
            "metadata": self.metadata,
            "subjects_added": self.subjects_added,
            "subjects_removed": self.subjects_removed,
            "scores": self.scores,
            "providers": self.providers,
            "indicators": self.indicators,
            "c_ref": self.c_ref,
        }


def _change(a: Any, b: Any) -> dict[str, Any]:
    out = {"from": a, "to": b}
    if isinstance(a, (int, float)) and isinstance(b, (int, float)) and not isinstance(a, bool):
        out["delta"] = canonical.q9(b - a)
    return out


def _field_changes(a: Mapping[str, Any], b: Mapping[str, Any], names) -> dict[str, Any]:
    return {n: _change(a.get(n), b.get(n)) for n in names if a.get(n) != b.get(n)}


def _read_json(root: Path, name: str) -> Any:
    return json.loads((root / name).read_text(encoding="utf-8"))


def diff_releases(dir_a: str | Path, dir_b: str | Path) -> ReleaseDiff:
    """Structural diff of two verified releases, in canonical order."""
    a_root, b_root = Path(dir_a), Path(dir_b)
    ma, mb = verify_release(a_root), verify_release(b_root)
    if ma["version"] == mb["version"] and ma["dataset_hash"] != mb["dataset_hash"]:
        raise AipiError("E_TAMPERED", f"both releases claim version {ma['version']} "
                        "but were built from different data")
    diff = ReleaseDiff()
    for key in ("version", "cutoff_date", "config_hash", "dataset_hash", "tool_version", "seed_registry"):
        if ma.get(key) != mb.get(key):
            diff.metadata[key] = {"from": ma.get(key), "to": mb.get(key)}

    sa = {s["subject_id"]: s for s in _read_json(a_root, "scores.json")["subjects"]}
    sb = {s["subject_id"]: s for s in _read_json(b_root, "scores.json")["subjects"]}
    diff.subjects_added = sorted(set(sb) - set(sa))
    diff.subjects_removed = sorted(set(sa) - set(sb))
    for sid in sorted(set(sa) & set(sb)):
        levels = {}
        overall = _field_changes(sa[sid], sb[sid], ("aipi_evid", "aipi_known", "aipi_opt", "mean_coverage"))
        if overall:
            levels["overall"] = overall
        for p in PILLARS:
            ch = _field_changes(sa[sid]["pillars"][p.value], sb[sid]["pillars"][p.value], SCORE_FIELDS)
            if ch:
                levels[p.value] = ch
        if levels:
            diff.scores[sid] = levels

    pa = {p["provider_id"]: p for p in _read_json(a_root, "providers.json")["providers"]}
    pb = {p["provider_id"]: p for p in _read_json(b_root, "providers.json")["providers"]}
    for pid in sorted(set(pa) | set(pb)):
        if pid not in pa or pid not in pb:
            diff.providers[pid] = {"status": "added" if pid in pb else "removed"}
            continue
        ch = _field_changes(pa[pid], pb[pid], ("aipi_evid", "aipi_known", "aipi_opt", "mean_coverage",
                                               "k_systems", "system_ids"))
        if ch:
            diff.providers[pid] = ch

    ia = {(r["subject_id"], r["indicator_id"]): r for r in _read_json(a_root, "adjudicated.json")}
    ib = {(r["subject_id"], r["indicator_id"]): r for r in _read_json(b_root, "adjudicated.json")}
    fields = ("value", "normalized", "evidence_class", "stale", "evidence_refs")
    for key in sorted(set(ia) | set(ib)):
        base = {"subject_id": key[0], "indicator_id": key[1]}
        if key not in ia:
            diff.indicators.append({**base, "status": "added", "value": ib[key]["value"],
                                    "evidence_refs": ib[key]["evidence_refs"]})
        elif key not in ib:
            diff.indicators.append({**base, "status": "removed", "value": ia[key]["value"],
                                    "evidence_refs": ia[key]["evidence_refs"]})
        else:
            ch = _field_changes(ia[key], ib[key], fields)
            if ch:
                diff.indicators.append({**base, "status": "changed", "changes": ch,
                                        "evidence_refs": ib[key]["evidence_refs"]})

    ca, cb = _read_json(a_root, "c_ref.json"), _read_json(b_root, "c_ref.json")
    diff.c_ref = {k: _change(ca.get(k), cb.get(k)) for k in sorted(set(ca) | set(cb)) if ca.get(k) != cb.get(k)}
    return diff


def with_version(config: ReleaseConfig, version: str) -> ReleaseConfig:
    return replace(config, version=version)
