"""Evidence graph: indicators, subjects, artifacts and coder codes.

Input is a directory of four canonical-JSON documents (``indicators.json``,
``subjects.json``, ``artifacts.json``, ``codes.json``), each a top-level
array of records. Parsing is strict and all-or-nothing: unknown fields,
dangling references and out-of-domain values are all collected and raised
together as a :class:`~aipi.errors.DatasetError`.
"""

from __future__ import annotations

import json
import re
import urllib.error
import urllib.request
from collections import defaultdict
from dataclasses import dataclass
from datetime import date
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence, Union
from urllib.parse import urlsplit

from aipi import canonical
from aipi.errors import AipiError, DatasetError


class Pillar(str, Enum):
    PG = "PG"  # participatory governance
    ID = "ID"  # inclusivity & diversity
    TR = "TR"  # transparency
    AC = "AC"  # accountability


PILLARS: tuple[Pillar, ...] = tuple(Pillar)


class IndicatorKind(str, Enum):
    BINARY = "binary"
    ORDINAL3 = "ordinal3"
    COUNT = "count"


class SourceKind(str, Enum):
    POLICY = "policy"
    MODEL_CARD = "model_card"
    DATASHEET = "datasheet"
    AUDIT_REPORT = "audit_report"
    REGISTRY_ENTRY = "registry_entry"
    CONSULTATION_RECORD = "consultation_record"
    RELEASE_NOTE = "release_note"
    OTHER = "other"


class SubjectKind(str, Enum):
    PROVIDER = "provider"
    SYSTEM = "system"


class EvidenceClass(str, Enum):
    PRIMARY = "primary_attributable"
    THIRD_PARTY = "third_party_neutral"


# strength order used when merging: higher is stronger
_CLASS_STRENGTH = {EvidenceClass.THIRD_PARTY: 0, EvidenceClass.PRIMARY: 1}

UNKNOWN = "unknown"
Value = Union[str, int]

DOCUMENTS = ("indicators.json", "subjects.json", "artifacts.json", "codes.json")

_INDICATOR_ID = re.compile(r"^(PG|ID|TR|AC)-[0-9]{2}$")


@dataclass(frozen=True)
class IndicatorDef:
    id: str
    pillar: Pillar
    kind: IndicatorKind
    title: str = ""


@dataclass(frozen=True)
class EvidenceArtifact:
    artifact_id: str
    url: str
    retrieved_date: date
    source_kind: SourceKind
    published_date: date | None = None
    archive_url: str | None = None


@dataclass(frozen=True)
class Subject:
    subject_id: str
    name: str
    kind: SubjectKind
    provider_id: str | None = None


@dataclass(frozen=True)
class RawCode:
    subject_id: str
    indicator_id: str
    coder_id: str
    value: Value
    coded_date: date
    evidence_refs: tuple[str, ...] = ()
    evidence_class: EvidenceClass | None = None
    stale: bool = False

    @property
    def key(self) -> tuple[str, str]:
        return (self.subject_id, self.indicator_id)


@dataclass(frozen=True)
class AdjudicatedCode:
    subject_id: str
    indicator_id: str
    value: Value
    evidence_class: EvidenceClass | None
    stale: bool
    contributing_coders: tuple[str, ...]
    conflict_resolved: bool
    evidence_refs: tuple[str, ...] = ()

    @property
    def is_unknown(self) -> bool:
        return self.value == UNKNOWN


@dataclass(frozen=True)
class Violation:
    code: str
    severity: str  # "error" | "warning"
    message: str
    file: str = ""
    index: int | None = None
    line: int | None = None

    def location(self) -> str:
        if self.line is not None:
            return f"{self.file}:{self.line}"
        if self.index is not None:
            return f"{self.file}[{self.index}]"
        return self.file or "<dataset>"

    def sort_key(self) -> tuple:
        return (self.file, -1 if self.line is None else self.line,
                -1 if self.index is None else self.index, self.code, self.message)

    def to_json(self) -> dict[str, Any]:
        return {
            "code": self.code,
            "severity": self.severity,
            "message": self.message,
            "file": self.file,
            "index": self.index,
            "line": self.line,
        }


def _err(code: str, message: str, file: str = "", index: int | None = None,
         line: int | None = None) -> Violation:
    return Violation(code, "error", message, file, index, line)


def _warn(code: str, message: str, file: str = "", index: int | None = None) -> Violation:
    return Violation(code, "warning", message, file, index)


@dataclass(frozen=True)
class Dataset:
    """Immutable evidence graph. Record lists are kept in canonical id order."""

    indicators: tuple[IndicatorDef, ...] = ()
    subjects: tuple[Subject, ...] = ()
    artifacts: tuple[EvidenceArtifact, ...] = ()
    codes: tuple[RawCode, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "indicators", tuple(sorted(self.indicators, key=lambda r: r.id)))
        object.__setattr__(self, "subjects", tuple(sorted(self.subjects, key=lambda r: r.subject_id)))
        object.__setattr__(self, "artifacts", tuple(sorted(self.artifacts, key=lambda r: r.artifact_id)))
        object.__setattr__(self, "codes", tuple(sorted(
            self.codes, key=lambda c: (c.subject_id, c.indicator_id, c.coder_id))))

    @cached_property
    def indicator_by_id(self) -> dict[str, IndicatorDef]:
        return {d.id: d for d in self.indicators}

    @cached_property
    def subject_by_id(self) -> dict[str, Subject]:
        return {s.subject_id: s for s in self.subjects}

    @cached_property
    def artifact_by_id(self) -> dict[str, EvidenceArtifact]:
        return {a.artifact_id: a for a in self.artifacts}

    @cached_property
    def codes_by_key(self) -> dict[tuple[str, str], tuple[RawCode, ...]]:
        grouped: dict[tuple[str, str], list[RawCode]] = defaultdict(list)
        for c in self.codes:
            grouped[c.key].append(c)
        return {k: tuple(v) for k, v in grouped.items()}

    def systems_of(self, provider_id: str) -> tuple[Subject, ...]:
        return tuple(s for s in self.subjects
                     if s.kind is SubjectKind.SYSTEM and s.provider_id == provider_id)

    def scored_subjects(self) -> tuple[Subject, ...]:
        """Units that receive their own pillar scores.

        Systems, plus providers that have no systems (scored directly).
        """
        with_systems = {s.provider_id for s in self.subjects if s.kind is SubjectKind.SYSTEM}
        return tuple(s for s in self.subjects
                     if s.kind is SubjectKind.SYSTEM or s.subject_id not in with_systems)

    def providers(self) -> tuple[Subject, ...]:
        return tuple(s for s in self.subjects if s.kind is SubjectKind.PROVIDER)

    def indicators_of(self, pillar: Pillar) -> tuple[IndicatorDef, ...]:
        return tuple(d for d in self.indicators if d.pillar is pillar)


# --------------------------------------------------------------------------
# parsing


class _FieldError(Exception):
    def __init__(self, code: str, message: str):
        self.code = code
        self.message = message


def _p_str(v: Any) -> str:
    if not isinstance(v, str):
        raise _FieldError("E_BAD_TYPE", f"expected string, got {type(v).__name__}")
    return v


def _p_key(v: Any) -> str:
    s = _p_str(v)
    if not s:
        raise _FieldError("E_BAD_TYPE", "identifier must be non-empty")
    return s


def _p_date(v: Any) -> date:
    s = _p_str(v)
    try:
        if len(s) != 10:
            raise ValueError
        return date.fromisoformat(s)
    except ValueError:
        raise _FieldError("E_BAD_DATE", f"not an ISO-8601 calendar date: {s!r}") from None


def _p_bool(v: Any) -> bool:
    if not isinstance(v, bool):
        raise _FieldError("E_BAD_TYPE", f"expected boolean, got {type(v).__name__}")
    return v


def _p_enum(enum_cls: type[Enum]) -> Callable[[Any], Enum]:
    def parse(v: Any) -> Enum:
        s = _p_str(v)
        try:
            return enum_cls(s)
        except ValueError:
            allowed = ", ".join(m.value for m in enum_cls)
            raise _FieldError("E_BAD_ENUM", f"{s!r} not in {{{allowed}}}") from None
    return parse


def _p_refs(v: Any) -> tuple[str, ...]:
    if not isinstance(v, list):
        raise _FieldError("E_BAD_TYPE", "expected a list of artifact ids")
    return tuple(_p_key(x) for x in v)


def _p_value(v: Any) -> Value:
    if isinstance(v, bool):
        raise _FieldError("E_KIND_MISMATCH", "boolean is not a valid code value")
    if isinstance(v, int):
        return v
    if isinstance(v, str):
        return v
    raise _FieldError("E_KIND_MISMATCH", f"value must be a string or integer, got {type(v).__name__}")


def _optional(parser: Callable[[Any], Any]) -> Callable[[Any], Any]:
    def parse(v: Any) -> Any:
        return None if v is None else parser(v)
    return parse


# field name -> (required, parser)
_SCHEMAS: dict[str, dict[str, tuple[bool, Callable[[Any], Any]]]] = {
    "indicators.json": {
        "id": (True, _p_key),
        "pillar": (True, _p_enum(Pillar)),
        "kind": (True, _p_enum(IndicatorKind)),
        "title": (False, _p_str),
    },
    "subjects.json": {
        "subject_id": (True, _p_key),
        "name": (True, _p_str),
        "kind": (True, _p_enum(SubjectKind)),
        "provider_id": (False, _optional(_p_key)),
    },
    "artifacts.json": {
        "artifact_id": (True, _p_key),
        "url": (True, _p_str),
        "published_date": (False, _optional(_p_date)),
        "retrieved_date": (True, _p_date),
        "archive_url": (False, _optional(_p_str)),
        "source_kind": (True, _p_enum(SourceKind)),
    },
    "codes.json": {
        "subject_id": (True, _p_key),
        "indicator_id": (True, _p_key),
        "coder_id": (True, _p_key),
        "value": (True, _p_value),
        "evidence_refs": (True, _p_refs),
        "evidence_class": (False, _optional(_p_enum(EvidenceClass))),
        "stale": (False, _p_bool),
        "coded_date": (True, _p_date),
    },
}

_BUILDERS: dict[str, Callable[..., Any]] = {
    "indicators.json": IndicatorDef,
    "subjects.json": Subject,
    "artifacts.json": EvidenceArtifact,
    "codes.json": RawCode,
}


class _DuplicateKey(Exception):
    pass


def _no_duplicate_keys(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for k, v in pairs:
        if k in out:
            raise _DuplicateKey(k)
        out[k] = v
    return out


def _load_json(name: str, raw: bytes | str, problems: list[Violation]) -> Any:
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            problems.append(_err("E_SYNTAX", f"not valid UTF-8: {exc}", name))
            return None
    try:
        return json.loads(raw, object_pairs_hook=_no_duplicate_keys)
    except json.JSONDecodeError as exc:
        problems.append(_err("E_SYNTAX", exc.msg, name, line=exc.lineno))
    except _DuplicateKey as exc:
        problems.append(_err("E_DUPLICATE_KEY", f"duplicate JSON object key {exc.args[0]!r}", name))
    return None


def _parse_records(name: str, doc: Any, problems: list[Violation]) -> list[Any]:
    if not isinstance(doc, list):
        problems.append(_err("E_BAD_TYPE", "top-level value must be an array", name))
        return []
    schema = _SCHEMAS[name]
    out = []
    for i, rec in enumerate(doc):
        if not isinstance(rec, dict):
            problems.append(_err("E_BAD_TYPE", "record must be an object", name, i))
            continue
        ok = True
        for k in sorted(set(rec) - set(schema)):
            problems.append(_err("E_UNKNOWN_FIELD", f"unknown field {k!r}", name, i))
            ok = False
        kwargs = {}
        for fname, (required, parser) in schema.items():
            if fname not in rec:
                if required:
                    problems.append(_err("E_MISSING_FIELD", f"missing field {fname!r}", name, i))
                    ok = False
                continue
            try:
                kwargs[fname] = parser(rec[fname])
            except _FieldError as exc:
                problems.append(_err(exc.code, f"{fname}: {exc.message}", name, i))
                ok = False
        if ok:
            out.append(_BUILDERS[name](**kwargs))
    return out


def parse_dataset(documents: Mapping[str, bytes | str]) -> Dataset:
    """Parse the four input documents into a linked :class:`Dataset`.

    Raises :class:`DatasetError` listing every blocking problem.
    """
    problems: list[Violation] = []
    for name in sorted(set(documents) - set(DOCUMENTS)):
        problems.append(_err("E_UNKNOWN_DOCUMENT", f"unexpected document {name!r}", name))
    records: dict[str, list[Any]] = {}
    for name in DOCUMENTS:
        if name not in documents:
            problems.append(_err("E_MISSING_FILE", "required document is missing", name))
            records[name] = []
            continue
        doc = _load_json(name, documents[name], problems)
        records[name] = _parse_records(name, doc, problems) if doc is not None else []
    if problems:
        raise DatasetError(sorted(problems, key=Violation.sort_key))
    lists = [records[name] for name in DOCUMENTS]
    # integrity is checked on file order so violation indices point into the files
    problems = _integrity(*lists)
    if problems:
        raise DatasetError(sorted(problems, key=Violation.sort_key))
    return Dataset(*(tuple(x) for x in lists))


def load_dataset(path: str | Path) -> Dataset:
    """Read and parse a dataset directory."""
    root = Path(path)
    if not root.is_dir():
        raise AipiError("E_MISSING_FILE", f"dataset directory not found: {root}")
    docs = {name: (root / name).read_bytes() for name in DOCUMENTS if (root / name).is_file()}
    return parse_dataset(docs)


def _record_json(obj: Any) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for k, v in obj.__dict__.items():
        if isinstance(v, Enum):
            v = v.value
        elif isinstance(v, date):
            v = v.isoformat()
        elif isinstance(v, tuple):
            v = list(v)
        if v is None:
            continue
        out[k] = v
    return out


def serialize_dataset(d: Dataset) -> dict[str, bytes]:
    """Inverse of :func:`parse_dataset`: document name -> canonical bytes."""
    return {
        "indicators.json": canonical.dump_bytes([_record_json(r) for r in d.indicators]),
        "subjects.json": canonical.dump_bytes([_record_json(r) for r in d.subjects]),
        "artifacts.json": canonical.dump_bytes([_record_json(r) for r in d.artifacts]),
        "codes.json": canonical.dump_bytes([_record_json(r) for r in d.codes]),
    }


def write_dataset(d: Dataset, path: str | Path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for name, data in serialize_dataset(d).items():
        (root / name).write_bytes(data)


def dataset_hash(d: Dataset) -> str:
    docs = serialize_dataset(d)
    return canonical.canonical_hash({k: canonical.sha256_hex(v) for k, v in docs.items()})


# --------------------------------------------------------------------------
# validation


def _value_problem(value: Value, kind: IndicatorKind) -> tuple[str, str] | None:
    if value == UNKNOWN:
        return None
    if kind is IndicatorKind.BINARY:
        if value in ("yes", "no"):
            return None
        return ("E_KIND_MISMATCH", f"binary indicator takes yes/no/unknown, got {value!r}")
    if isinstance(value, str):
        return ("E_KIND_MISMATCH", f"{kind.value} indicator takes an integer, got {value!r}")
    if kind is IndicatorKind.ORDINAL3 and value not in (0, 1, 2):
        return ("E_VALUE_DOMAIN", f"ordinal3 value must be 0, 1 or 2, got {value}")
    if kind is IndicatorKind.COUNT and value < 0:
        return ("E_VALUE_DOMAIN", f"count must be non-negative, got {value}")
    return None


def _duplicates(keys: Iterable[Any]) -> list[tuple[int, Any]]:
    seen = set()
    dups = []
    for i, k in enumerate(keys):
        if k in seen:
            dups.append((i, k))
        seen.add(k)
    return dups


def _integrity(indicators: Sequence[IndicatorDef], subjects_: Sequence[Subject],
               artifacts_: Sequence[EvidenceArtifact], codes: Sequence[RawCode]) -> list[Violation]:
    """Structural invariants that make a dataset unusable when broken."""
    out: list[Violation] = []
    f_ind, f_sub, f_art, f_code = DOCUMENTS

    for i, k in _duplicates(r.id for r in indicators):
        out.append(_err("E_DUPLICATE_KEY", f"duplicate indicator id {k!r}", f_ind, i))
    for i, ind in enumerate(indicators):
        if not _INDICATOR_ID.match(ind.id):
            out.append(_err("E_BAD_ID", f"indicator id {ind.id!r} must look like PG-03", f_ind, i))
        elif ind.id[:2] != ind.pillar.value:
            out.append(_err("E_PILLAR_MISMATCH",
                            f"indicator {ind.id!r} declares pillar {ind.pillar.value}", f_ind, i))

    for i, k in _duplicates(s.subject_id for s in subjects_):
        out.append(_err("E_DUPLICATE_KEY", f"duplicate subject id {k!r}", f_sub, i))
    subjects = {s.subject_id: s for s in subjects_}
    for i, s in enumerate(subjects_):
        if s.kind is SubjectKind.SYSTEM:
            if s.provider_id is None:
                out.append(_err("E_MISSING_PROVIDER", f"system {s.subject_id!r} has no provider_id",
                                f_sub, i))
            elif s.provider_id not in subjects:
                out.append(_err("E_DANGLING_REF",
                                f"provider_id {s.provider_id!r} of {s.subject_id!r} does not resolve",
                                f_sub, i))
            elif subjects[s.provider_id].kind is not SubjectKind.PROVIDER:
                out.append(_err("E_NOT_PROVIDER",
                                f"{s.subject_id!r} points at {s.provider_id!r}, which is not a provider",
                                f_sub, i))
        elif s.provider_id is not None:
            out.append(_err("E_PROVIDER_HAS_PARENT",
                            f"provider {s.subject_id!r} must not carry provider_id", f_sub, i))

    for i, k in _duplicates(a.artifact_id for a in artifacts_):
        out.append(_err("E_DUPLICATE_KEY", f"duplicate artifact id {k!r}", f_art, i))

    indicator_by_id = {r.id: r for r in indicators}
    artifacts = {a.artifact_id for a in artifacts_}
    for i, k in _duplicates((c.subject_id, c.indicator_id, c.coder_id) for c in codes):
        out.append(_err("E_DUPLICATE_KEY", f"second code for (subject, indicator, coder) {k}", f_code, i))
    for i, c in enumerate(codes):
        tag = f"{c.subject_id}/{c.indicator_id}/{c.coder_id}"
        if c.subject_id not in subjects:
            out.append(_err("E_DANGLING_REF", f"{tag}: unknown subject {c.subject_id!r}", f_code, i))
        ind = indicator_by_id.get(c.indicator_id)
        if ind is None:
            out.append(_err("E_DANGLING_REF", f"{tag}: unknown indicator {c.indicator_id!r}", f_code, i))
        else:
            problem = _value_problem(c.value, ind.kind)
            if problem:
                out.append(_err(problem[0], f"{tag}: {problem[1]}", f_code, i))
        if c.value == UNKNOWN:
            if c.evidence_refs:
                out.append(_err("E_EVIDENCE_ON_UNKNOWN",
                                f"{tag}: an unknown value cannot cite evidence", f_code, i))
        else:
            if not c.evidence_refs:
                out.append(_err("E_MISSING_EVIDENCE",
                                f"{tag}: a coded value needs at least one evidence link", f_code, i))
            if c.evidence_class is None:
                out.append(_err("E_MISSING_FIELD",
                                f"{tag}: evidence_class is required for a coded value", f_code, i))
        for ref in c.evidence_refs:
            if ref not in artifacts:
                out.append(_err("E_DANGLING_REF", f"{tag}: unknown artifact {ref!r}", f_code, i))
    return out


def _url_problem(url: str) -> tuple[str, str] | None:
    try:
        parts = urlsplit(url)
    except ValueError as exc:
        return ("E_URL_SYNTAX", f"unparseable URL {url!r}: {exc}")
    if parts.scheme not in ("http", "https"):
        return ("E_URL_SCHEME", f"URL scheme must be http or https: {url!r}")
    if not parts.netloc or any(ch.isspace() for ch in url):
        return ("E_URL_SYNTAX", f"not an absolute URL: {url!r}")
    return None


def validate_dataset(d: Dataset, cutoff: date) -> list[Violation]:
    """Every invariant violation in ``d``, errors and warnings, in canonical order.

    Warnings do not block scoring.
    """
    out = _integrity(d.indicators, d.subjects, d.artifacts, d.codes)
    f_ind, f_sub, f_art, f_code = DOCUMENTS
    for i, a in enumerate(d.artifacts):
        for label, url in (("url", a.url), ("archive_url", a.archive_url)):
            if url is None:
                continue
            problem = _url_problem(url)
            if problem:
                out.append(_err(problem[0], f"{a.artifact_id} {label}: {problem[1]}", f_art, i))
        if a.retrieved_date > cutoff:
            out.append(_err("E_AFTER_CUTOFF",
                            f"{a.artifact_id} retrieved {a.retrieved_date} after cutoff {cutoff}",
                            f_art, i))
        if a.published_date is None:
            out.append(_warn("W_NO_PUB_DATE", f"{a.artifact_id} has no published_date", f_art, i))

    scored = {s.subject_id for s in d.scored_subjects()}
    coded: dict[str, set[str]] = defaultdict(set)
    for i, c in enumerate(d.codes):
        if c.subject_id in d.subject_by_id and c.subject_id not in scored:
            out.append(_warn("W_PROVIDER_CODES_IGNORED",
                             f"{c.subject_id}/{c.indicator_id}: provider has systems; "
                             "code is not scored", f_code, i))
        coded[c.subject_id].add(c.indicator_id)
    all_ids = {r.id for r in d.indicators}
    for i, s in enumerate(d.subjects):
        if s.subject_id not in scored:
            continue
        missing = len(all_ids - coded[s.subject_id])
        if missing:
            out.append(_warn("W_UNCODED",
                             f"{s.subject_id}: {missing} indicator(s) have no code and score as unknown",
                             f_sub, i))
    return sorted(out, key=Violation.sort_key)


def has_errors(violations: Iterable[Violation]) -> bool:
    return any(v.severity == "error" for v in violations)


# --------------------------------------------------------------------------
# adjudication


def _order_key(value: Value) -> int:
    if value == "no":
        return 0
    if value == "yes":
        return 1
    return value  # type: ignore[return-value]


def _single(c: RawCode) -> AdjudicatedCode:
    # the common case: nothing to merge
    if c.value == UNKNOWN:
        return AdjudicatedCode(c.subject_id, c.indicator_id, UNKNOWN, None, False, (c.coder_id,), False)
    if isinstance(c.value, str) and c.value not in ("yes", "no"):
        raise AipiError("E_KIND_MISMATCH", f"{c.subject_id}/{c.indicator_id}: value {c.value!r}")
    return AdjudicatedCode(c.subject_id, c.indicator_id, c.value, c.evidence_class, c.stale,
                           (c.coder_id,), False, tuple(sorted(set(c.evidence_refs))))


def merge_codes(codes: Sequence[RawCode]) -> AdjudicatedCode:
    """Conservative merge of several coders' codes for one (subject, indicator).

    Unknown entries are ignored when any coder has evidence. The smallest
    value wins; class and staleness come from the codes that attain it.
    """
    if not codes:
        raise AipiError("E_EMPTY", "merge_codes needs at least one code")
    keys = {c.key for c in codes}
    if len(keys) != 1:
        raise AipiError("E_KEY_MISMATCH", f"codes span several (subject, indicator) pairs: {sorted(keys)}")
    subject_id, indicator_id = next(iter(keys))
    if len(codes) == 1:
        return _single(codes[0])
    coders = tuple(sorted(c.coder_id for c in codes))
    known = [c for c in codes if c.value != UNKNOWN]
    variants = {"binary" if isinstance(c.value, str) else "integer" for c in known}
    if len(variants) > 1 or any(isinstance(c.value, str) and c.value not in ("yes", "no") for c in known):
        raise AipiError("E_KIND_MISMATCH",
                        f"{subject_id}/{indicator_id}: mixed value variants "
                        f"{sorted(repr(c.value) for c in known)}")
    if not known:
        return AdjudicatedCode(subject_id, indicator_id, UNKNOWN, None, False, coders, False)
    lowest = min(_order_key(c.value) for c in known)
    winners = [c for c in known if _order_key(c.value) == lowest]
    classes = [c.evidence_class for c in winners if c.evidence_class is not None]
    best_class = max(classes, key=_CLASS_STRENGTH.__getitem__) if classes else None
    return AdjudicatedCode(
        subject_id=subject_id,
        indicator_id=indicator_id,
        value=winners[0].value,
        evidence_class=best_class,
        stale=all(c.stale for c in winners),
        contributing_coders=coders,
        conflict_resolved=len({_order_key(c.value) for c in known}) > 1,
        evidence_refs=tuple(sorted({r for c in winners for r in c.evidence_refs})),
    )


def adjudicate(d: Dataset) -> dict[tuple[str, str], AdjudicatedCode]:
    """Final code for every scored subject x indicator.

    Pairs nobody coded become unknown with no contributing coders.
    """
    out = {}
    for s in d.scored_subjects():
        for ind in d.indicators:
            key = (s.subject_id, ind.id)
            codes = d.codes_by_key.get(key)
            if codes:
                out[key] = merge_codes(codes)
            else:
                out[key] = AdjudicatedCode(s.subject_id, ind.id, UNKNOWN, None, False, (), False)
    return out


# --------------------------------------------------------------------------
# link checking (side report only; never consulted by scoring)


@dataclass(frozen=True)
class LinkStatus:
    artifact_id: str
    url: str
    status: str  # ok | redirect | unreachable | not_attempted
    http_status: int | None = None
    detail: str = ""

    def to_json(self) -> dict[str, Any]:
        return {"artifact_id": self.artifact_id, "url": self.url, "status": self.status,
                "http_status": self.http_status, "detail": self.detail}


class _NoRedirect(urllib.request.HTTPRedirectHandler):
    def redirect_request(self, req, fp, code, msg, headers, newurl):
        return None


def _probe(url: str, timeout: float) -> tuple[str, int | None, str]:
    opener = urllib.request.build_opener(_NoRedirect)
    for method in ("HEAD", "GET"):
        req = urllib.request.Request(url, method=method, headers={"User-Agent": "aipi-linkcheck"})
        try:
            with opener.open(req, timeout=timeout) as resp:
                return "ok", resp.status, ""
        except urllib.error.HTTPError as exc:
            if 300 <= exc.code < 400:
                return "redirect", exc.code, exc.headers.get("Location", "") or ""
            if exc.code in (405, 501) and method == "HEAD":
                continue
            return "unreachable", exc.code, str(exc.reason)
        except (urllib.error.URLError, OSError, ValueError) as exc:
            return "unreachable", None, str(getattr(exc, "reason", exc))
    return "unreachable", None, "no method succeeded"


def link_check(d: Dataset, live: bool = False, timeout: float = 10.0) -> list[LinkStatus]:
    """Accessibility status of every artifact URL.

    Network access happens only with ``live=True``; otherwise every
    artifact is reported as ``not_attempted``.
    """
    out = []
    for a in d.artifacts:
        if not live:
            out.append(LinkStatus(a.artifact_id, a.url, "not_attempted"))
            continue
        status, code, detail = _probe(a.url, timeout)
        out.append(LinkStatus(a.artifact_id, a.url, status, code, detail))
    return out
