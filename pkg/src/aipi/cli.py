"""Command-line entry point.

Exit status: 0 on success, 1 on validation or data errors, 2 on usage
errors. Summaries go to stdout; machine-readable outputs only to files
under ``--out``. Environment variables are never consulted.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Any, Sequence

from aipi import __version__, canonical
from aipi.errors import AipiError, DatasetError
from aipi.evidence_model import link_check, load_dataset, validate_dataset
from aipi.normalize import load_c_ref
from aipi.release import (
    MANIFEST,
    ReleaseConfig,
    Results,
    ValidationFailed,
    add_floors,
    add_reliability,
    add_sensitivity,
    build_release,
    check_dataset,
    diff_releases,
    render_files,
    score_dataset,
    violations_bytes,
)
from aipi.score import known_only_report, render_known_only

SUBCOMMANDS = ("validate", "score", "reliability", "sensitivity", "build", "diff", "rescore",
               "floors", "linkcheck")

_RUN_FIELDS = {"dataset", "out", "offline"}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    dataset: Path | None
    out: Path | None
    release: ReleaseConfig
    offline: bool = False
    cutoff_given: bool = False

    @property
    def cutoff(self) -> date | None:
        """The cutoff to enforce, or None when neither flag nor config set one."""
        return self.release.cutoff_date if self.cutoff_given else None


def _load_config_file(path: str) -> dict[str, Any]:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a JSON object")
    return data


def resolve_config(args: argparse.Namespace, need_release_meta: bool = False) -> RunConfig:
    """Merge ``--config`` with command-line flags; flags win."""
    data = _load_config_file(args.config) if getattr(args, "config", None) else {}
    run = {k: data.pop(k) for k in list(data) if k in _RUN_FIELDS}
    overrides = {
        "version": getattr(args, "version", None),
        "cutoff_date": getattr(args, "cutoff", None),
        "sample_fraction": getattr(args, "sample_fraction", None),
        "n_resamples": getattr(args, "n_resamples", None),
        "n_bins": getattr(args, "n_bins", None),
    }
    for k, v in overrides.items():
        if v is not None:
            data[k] = v
    seeds = dict(data.get("seeds", {"sampling": 0, "bootstrap": 0}))
    if getattr(args, "sampling_seed", None) is not None:
        seeds["sampling"] = args.sampling_seed
    if getattr(args, "bootstrap_seed", None) is not None:
        seeds["bootstrap"] = args.bootstrap_seed
    data["seeds"] = seeds
    floors = dict(data.get("floors", {}))
    for flag in ("min_overall_evid", "min_pillar_evid", "min_pillar_coverage", "min_mean_coverage"):
        v = getattr(args, flag, None)
        if v is not None:
            floors[flag] = v
    if getattr(args, "required", None) is not None:
        floors["required_artifacts"] = [x for x in args.required.split(",") if x]
    data["floors"] = floors
    if need_release_meta:
        for key, flag in (("version", "--version"), ("cutoff_date", "--cutoff")):
            if key not in data:
                raise UsageError(f"{flag} is required (or set {key} in --config)")
    data.setdefault("version", "0.0.0")
    explicit_cutoff = "cutoff_date" in data
    data.setdefault("cutoff_date", date.max.isoformat())
    try:
        release = ReleaseConfig.from_json(data)
    except AipiError as exc:
        raise UsageError(f"bad configuration: {exc}") from None
    dataset = getattr(args, "dataset", None) or run.get("dataset")
    out = getattr(args, "out", None) or run.get("out")
    if dataset is not None and not Path(dataset).is_dir():
        raise UsageError(f"dataset directory not found: {dataset}")
    return RunConfig(Path(dataset) if dataset else None, Path(out) if out else None, release,
                     bool(getattr(args, "offline", False) or run.get("offline", False)), explicit_cutoff)


def _require(cfg: RunConfig, *names: str) -> None:
    for n in names:
        if getattr(cfg, n) is None:
            raise UsageError(f"--{n} is required")


def _pipeline(cfg: RunConfig, workers: int, c_ref=None) -> Results:
    d = load_dataset(cfg.dataset)
    violations = check_dataset(d, cfg.cutoff)
    return score_dataset(d, cfg.release, c_ref, workers, violations)


def _emit(files: dict[str, bytes], out: Path, keep: Sequence[str]) -> None:
    chosen = {k: v for k, v in files.items() if k in keep}
    if out.exists() and (out / MANIFEST).is_file():
        raise UsageError(f"{out} holds a release; write partial outputs elsewhere")
    out.mkdir(parents=True, exist_ok=True)
    for name, data in sorted(chosen.items()):
        (out / name).write_bytes(data)


SCORE_FILES = ("c_ref.json", "adjudicated.json", "scores.json", "scores.csv", "providers.json",
               "known_only_report.json", "violations.json")


def cmd_validate(args, out) -> int:
    cfg = resolve_config(args)
    _require(cfg, "dataset")
    try:
        d = load_dataset(cfg.dataset)
        violations = validate_dataset(d, cfg.cutoff or date.max)
    except DatasetError as exc:
        violations = exc.violations
    errors = [v for v in violations if v.severity == "error"]
    warnings = [v for v in violations if v.severity == "warning"]
    for v in errors:
        print(f"error {v.code} {v.location()}: {v.message}", file=out)
    if cfg.out is not None:
        cfg.out.mkdir(parents=True, exist_ok=True)
        (cfg.out / "violations.json").write_bytes(violations_bytes(violations))
    print(f"{len(errors)} errors, {len(warnings)} warnings", file=out)
    return 1 if errors else 0


def cmd_score(args, out) -> int:
    cfg = resolve_config(args)
    _require(cfg, "dataset", "out")
    res = _pipeline(cfg, args.workers)
    _emit(render_files(res), cfg.out, SCORE_FILES)
    print(render_known_only(known_only_report(res.provider_scores, res.weights)), end="", file=out)
    print(f"scored {len(res.subject_scores)} subjects, {len(res.provider_scores)} providers -> {cfg.out}",
          file=out)
    return 0


def cmd_rescore(args, out) -> int:
    cfg = resolve_config(args)
    _require(cfg, "dataset", "out")
    refs = load_c_ref(args.c_ref)
    res = _pipeline(cfg, args.workers, c_ref=refs)
    _emit(render_files(res), cfg.out, SCORE_FILES)
    print(f"rescored {len(res.subject_scores)} subjects against {args.c_ref} -> {cfg.out}", file=out)
    return 0


def cmd_floors(args, out) -> int:
    cfg = resolve_config(args)
    _require(cfg, "dataset", "out")
    res = _pipeline(cfg, args.workers)
    add_floors(res, cfg.release.floors)
    _emit(render_files(res), cfg.out, ("floor_verdicts.json",))
    failed = [v for v in res.floor_verdicts.values() if not v.passed]
    for v in failed:
        codes = ", ".join(r.code + (f":{r.target}" if r.target else "") for r in v.reasons)
        print(f"fail {v.subject_id}: {codes}", file=out)
    print(f"{len(res.floor_verdicts) - len(failed)} pass, {len(failed)} fail", file=out)
    return 0


def cmd_reliability(args, out) -> int:
    cfg = resolve_config(args)
    _require(cfg, "dataset", "out")
    res = _pipeline(cfg, args.workers)
    add_reliability(res, cfg.release)
    _emit(render_files(res), cfg.out, ("reliability.json",))
    rel = res.reliability
    alpha = "undefined" if rel.alpha_overall is None else f"{rel.alpha_overall:.3f}"
    print(f"alpha={alpha} over {rel.n_multi_coded} multi-coded of {rel.n_items} sampled items, "
          f"{rel.n_coders} coders", file=out)
    return 0


def cmd_sensitivity(args, out) -> int:
    cfg = resolve_config(args)
    _require(cfg, "dataset", "out")
    res = _pipeline(cfg, args.workers)
    add_sensitivity(res, cfg.release)
    _emit(render_files(res), cfg.out, ("sensitivity.json", "coverage_dependence.csv"))
    sens = res.sensitivity
    for p, tau in sens.tau_leave_one_pillar_out.items():
        print(f"leave out {p.value}: tau={'undefined' if tau is None else f'{tau:.3f}'}", file=out)
    print(f"{len(sens.rank_flips)} rank flips", file=out)
    return 0


def cmd_build(args, out) -> int:
    cfg = resolve_config(args, need_release_meta=True)
    _require(cfg, "dataset", "out")
    manifest = build_release(cfg.dataset, cfg.release, cfg.out, workers=args.workers)
    print(f"release {manifest['version']} -> {cfg.out} ({len(manifest['files']) + 1} files, "
          f"dataset {manifest['dataset_hash'][:12]})", file=out)
    return 0


def cmd_diff(args, out) -> int:
    for p in (args.release_a, args.release_b):
        if not Path(p).is_dir():
            raise UsageError(f"release directory not found: {p}")
    diff = diff_releases(args.release_a, args.release_b)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "diff.json").write_bytes(canonical.dump_bytes(diff.to_json()))
    if diff.is_empty:
        print("no changes", file=out)
        return 0
    for key, ch in diff.metadata.items():
        print(f"metadata {key}: {ch['from']} -> {ch['to']}", file=out)
    print(f"{len(diff.scores)} subjects with score changes, {len(diff.indicators)} indicator changes, "
          f"{len(diff.subjects_added)} added, {len(diff.subjects_removed)} removed", file=out)
    return 0


def cmd_linkcheck(args, out) -> int:
    if args.live and args.offline:
        raise UsageError("--offline conflicts with --live")
    cfg = resolve_config(args)
    _require(cfg, "dataset", "out")
    d = load_dataset(cfg.dataset)
    statuses = link_check(d, live=args.live and not cfg.offline, timeout=args.timeout)
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "link_status.json").write_bytes(canonical.dump_bytes([s.to_json() for s in statuses]))
    counts: dict[str, int] = {}
    for s in statuses:
        counts[s.status] = counts.get(s.status, 0) + 1
    print(", ".join(f"{n} {k}" for k, n in sorted(counts.items())) or "no artifacts", file=out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aipi", description="AIPI scoring engine: evidence, coverage and uncertainty-aware scores")
    parser.add_argument("--tool-version", action="version", version=f"aipi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(SUBCOMMANDS) + "}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="canonical-JSON run configuration; flags override it")
    common.add_argument("--dataset", help="dataset directory")
    common.add_argument("--out", help="output directory")
    common.add_argument("--version", help="release version (semantic)")
    common.add_argument("--cutoff", help="evidence cutoff date, YYYY-MM-DD")
    common.add_argument("--offline", action="store_true", help="forbid network access")
    common.add_argument("--workers", type=int, default=1, help="threads for per-subject scoring")

    floors = argparse.ArgumentParser(add_help=False)
    floors.add_argument("--min-overall-evid", type=float)
    floors.add_argument("--min-pillar-evid", type=float)
    floors.add_argument("--min-pillar-coverage", type=float)
    floors.add_argument("--min-mean-coverage", type=float)
    floors.add_argument("--required", help="comma-separated required indicator ids")

    rel = argparse.ArgumentParser(add_help=False)
    rel.add_argument("--sample-fraction", type=float)
    rel.add_argument("--sampling-seed", type=int)

    sens = argparse.ArgumentParser(add_help=False)
    sens.add_argument("--n-resamples", type=int)
    sens.add_argument("--bootstrap-seed", type=int)
    sens.add_argument("--n-bins", type=int)

    sub.add_parser("validate", parents=[common], help="check a dataset").set_defaults(func=cmd_validate)
    sub.add_parser("score", parents=[common], help="score subjects and providers").set_defaults(func=cmd_score)
    sub.add_parser("floors", parents=[common, floors], help="estimator-guidance floor checks") \
        .set_defaults(func=cmd_floors)
    sub.add_parser("reliability", parents=[common, rel], help="inter-rater reliability") \
        .set_defaults(func=cmd_reliability)
    sub.add_parser("sensitivity", parents=[common, sens], help="rank stability analyses") \
        .set_defaults(func=cmd_sensitivity)
    sub.add_parser("build", parents=[common, floors, rel, sens], help="build a versioned release") \
        .set_defaults(func=cmd_build)
    p = sub.add_parser("rescore", parents=[common], help="score against a frozen c_ref table")
    p.add_argument("--c-ref", required=True, help="c_ref.json from a prior release")
    p.set_defaults(func=cmd_rescore)
    p = sub.add_parser("diff", help="compare two releases")
    p.add_argument("release_a")
    p.add_argument("release_b")
    p.add_argument("--out", help="directory for diff.json")
    p.set_defaults(func=cmd_diff)
    p = sub.add_parser("linkcheck", parents=[common], help="check evidence links (side report)")
    p.add_argument("--live", action="store_true", help="actually contact the URLs")
    p.add_argument("--timeout", type=float, default=10.0)
    p.set_defaults(func=cmd_linkcheck)
    return parser


def run(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    if getattr(args, "workers", 1) < 1:
        print("aipi: error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"aipi: error: {exc}", file=sys.stderr)
        return 2
    except (ValidationFailed, DatasetError) as exc:
        for v in exc.violations:
            if v.severity == "error":
                print(f"error {v.code} {v.location()}: {v.message}", file=sys.stderr)
        print(f"aipi: aborted: {exc.code}", file=sys.stderr)
        return 1
    except AipiError as exc:
        print(f"aipi: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
