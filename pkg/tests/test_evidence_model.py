import json
import threading
from dataclasses import replace
from datetime import date
from functools import partial
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aipi.errors import AipiError, DatasetError
from aipi.evidence_model import (
    DOCUMENTS,
    UNKNOWN,
    Dataset,
    EvidenceArtifact,
    EvidenceClass,
    RawCode,
    SourceKind,
    adjudicate,
    dataset_hash,
    has_errors,
    link_check,
    load_dataset,
    merge_codes,
    parse_dataset,
    serialize_dataset,
    validate_dataset,
)
from helpers import CUTOFF, FIXTURE, code, dataset


def fixture_docs():
    return {name: (FIXTURE / name).read_bytes() for name in DOCUMENTS}


def codes_of(exc_info):
    return [v.code for v in exc_info.value.violations]


def mutate(name, fn):
    docs = fixture_docs()
    records = json.loads(docs[name])
    fn(records)
    docs[name] = json.dumps(records).encode()
    return docs


# --- parsing ---------------------------------------------------------------

def test_fixture_parses_and_validates_clean(cohort):
    assert len(cohort.providers()) == 12
    assert len(cohort.scored_subjects()) == 16
    assert len(cohort.indicators) == 24
    assert not has_errors(validate_dataset(cohort, CUTOFF))


def test_serialize_round_trip_is_byte_stable(cohort):
    docs = serialize_dataset(cohort)
    again = parse_dataset(docs)
    assert again == cohort
    assert serialize_dataset(again) == docs
    assert docs == fixture_docs()
    assert dataset_hash(again) == dataset_hash(cohort)


def test_syntax_error_reports_line():
    docs = fixture_docs()
    docs["codes.json"] = b'[\n  {"subject_id": "x",\n  oops\n]'
    with pytest.raises(DatasetError) as exc:
        parse_dataset(docs)
    v = exc.value.violations[0]
    assert (v.code, v.file, v.line) == ("E_SYNTAX", "codes.json", 3)
    assert v.location() == "codes.json:3"


def test_duplicate_json_key():
    docs = fixture_docs()
    docs["indicators.json"] = b'[{"id": "PG-01", "id": "PG-02", "pillar": "PG", "kind": "binary"}]'
    with pytest.raises(DatasetError) as exc:
        parse_dataset(docs)
    assert codes_of(exc) == ["E_DUPLICATE_KEY"]


@pytest.mark.parametrize("name, edit, expected", [
    ("indicators.json", lambda r: r[0].update(weight=2), "E_UNKNOWN_FIELD"),
    ("indicators.json", lambda r: r[0].pop("kind"), "E_MISSING_FIELD"),
    ("indicators.json", lambda r: r[0].update(kind="likert"), "E_BAD_ENUM"),
    ("artifacts.json", lambda r: r[0].update(retrieved_date="2025-13-01"), "E_BAD_DATE"),
    ("artifacts.json", lambda r: r[0].update(retrieved_date="2025-06-01T10:00:00Z"), "E_BAD_DATE"),
    ("codes.json", lambda r: r[0].update(value=1.5), "E_KIND_MISMATCH"),
    ("codes.json", lambda r: r[0].update(stale="no"), "E_BAD_TYPE"),
    ("subjects.json", lambda r: r[0].update(name=None), "E_BAD_TYPE"),
])
def test_schema_violations(name, edit, expected):
    with pytest.raises(DatasetError) as exc:
        parse_dataset(mutate(name, edit))
    assert expected in codes_of(exc)
    v = exc.value.violations[0]
    assert v.file == name and v.index == 0


def test_unknown_and_missing_documents():
    docs = fixture_docs()
    del docs["artifacts.json"]
    docs["notes.json"] = b"[]"
    with pytest.raises(DatasetError) as exc:
        parse_dataset(docs)
    assert sorted(codes_of(exc)) == ["E_MISSING_FILE", "E_UNKNOWN_DOCUMENT"]


def test_missing_directory(tmp_path):
    with pytest.raises(AipiError) as exc:
        load_dataset(tmp_path / "nope")
    assert exc.value.code == "E_MISSING_FILE"


def test_all_problems_reported_together():
    def edit(records):
        records[0].update(bogus=1)
        records[3].pop("coder_id")
    with pytest.raises(DatasetError) as exc:
        parse_dataset(mutate("codes.json", edit))
    found = [(v.code, v.index) for v in exc.value.violations]
    assert found == [("E_UNKNOWN_FIELD", 0), ("E_MISSING_FIELD", 3)]


# --- referential integrity -------------------------------------------------

def first_known(records):
    return next(r for r in records if r["value"] != UNKNOWN)


@pytest.mark.parametrize("name, edit, expected", [
    ("codes.json", lambda r: first_known(r).update(evidence_refs=["art-missing"]), "E_DANGLING_REF"),
    ("codes.json", lambda r: r[0].update(subject_id="prov-99"), "E_DANGLING_REF"),
    ("codes.json", lambda r: first_known(r).update(evidence_refs=[]), "E_MISSING_EVIDENCE"),
    ("codes.json", lambda r: next(x for x in r if x["value"] == UNKNOWN).update(
        evidence_refs=["art-prov-01-sys1-AC-01"]), "E_EVIDENCE_ON_UNKNOWN"),
    ("codes.json", lambda r: next(x for x in r if x["indicator_id"] == "AC-03").update(
        value=3, evidence_refs=["art-prov-01-sys1-AC-01"], evidence_class="primary_attributable"),
     "E_VALUE_DOMAIN"),
    ("codes.json", lambda r: next(x for x in r if x["indicator_id"] == "AC-04").update(
        value="yes", evidence_refs=["art-prov-01-sys1-AC-01"], evidence_class="primary_attributable"),
     "E_KIND_MISMATCH"),
    ("codes.json", lambda r: r.append(dict(r[0])), "E_DUPLICATE_KEY"),
    ("indicators.json", lambda r: r[0].update(pillar="PG"), "E_PILLAR_MISMATCH"),
    ("indicators.json", lambda r: r.append({"id": "PG-1", "pillar": "PG", "kind": "binary"}), "E_BAD_ID"),
    ("subjects.json", lambda r: r[1].pop("provider_id"), "E_MISSING_PROVIDER"),
    ("subjects.json", lambda r: r[1].update(provider_id="prov-01-sys2"), "E_NOT_PROVIDER"),
    ("subjects.json", lambda r: r[0].update(provider_id="prov-02"), "E_PROVIDER_HAS_PARENT"),
])
def test_integrity_violations(name, edit, expected):
    with pytest.raises(DatasetError) as exc:
        parse_dataset(mutate(name, edit))
    assert expected in codes_of(exc)


def test_violation_index_points_into_file_order():
    def edit(records):
        records[5]["evidence_refs"] = ["art-missing"]
        records[5]["value"] = "yes"
        records[5]["evidence_class"] = "primary_attributable"
    docs = mutate("codes.json", edit)
    with pytest.raises(DatasetError) as exc:
        parse_dataset(docs)
    dangling = [v for v in exc.value.violations if v.code == "E_DANGLING_REF"]
    assert [v.index for v in dangling] == [5]


# --- validation ------------------------------------------------------------

def test_after_cutoff_is_an_error(cohort):
    violations = validate_dataset(cohort, date(2025, 6, 1))
    assert any(v.code == "E_AFTER_CUTOFF" for v in violations)
    assert has_errors(violations)


def test_warnings_do_not_block(cohort):
    violations = validate_dataset(cohort, CUTOFF)
    assert {v.severity for v in violations} == {"warning"}
    assert {v.code for v in violations} <= {"W_NO_PUB_DATE", "W_PROVIDER_CODES_IGNORED", "W_UNCODED"}
    assert violations == sorted(violations, key=lambda v: v.sort_key())


@pytest.mark.parametrize("url, expected", [
    ("ftp://evidence.example.org/x", "E_URL_SCHEME"),
    ("evidence.example.org/x", "E_URL_SCHEME"),
    ("https:///nohost", "E_URL_SYNTAX"),
    ("https://evidence.example.org/a b", "E_URL_SYNTAX"),
])
def test_url_checks(url, expected):
    d = dataset({"p1": {"PG-01": "yes"}})
    bad = EvidenceArtifact("a1", url, date(2025, 6, 1), SourceKind.POLICY, date(2025, 1, 1))
    d = Dataset(d.indicators, d.subjects, (bad,), d.codes)
    assert [v.code for v in validate_dataset(d, CUTOFF) if v.severity == "error"] == [expected]


def test_uncoded_and_ignored_provider_codes():
    d = dataset({"p1": {"PG-01": "yes"}, "s1": {"PG-01": "no", "ID-01": "no", "TR-01": "no",
                                                "AC-01": "no"}},
                systems={"s1": "p1"})
    codes = [v.code for v in validate_dataset(d, CUTOFF)]
    # p1 has a system, so its own code is ignored; s1 is fully coded
    assert codes == ["W_PROVIDER_CODES_IGNORED"]
    d2 = dataset({"p1": {"PG-01": "yes"}})
    assert [v.code for v in validate_dataset(d2, CUTOFF)] == ["W_UNCODED"]


def test_missing_published_date_is_a_warning():
    d = dataset({"p1": {"PG-01": "yes", "ID-01": "no", "TR-01": "no", "AC-01": "no"}})
    art = EvidenceArtifact("a1", "https://evidence.example.org/a1", date(2025, 6, 1), SourceKind.POLICY)
    d = Dataset(d.indicators, d.subjects, (art,), d.codes)
    assert [(v.code, v.severity) for v in validate_dataset(d, CUTOFF)] == [("W_NO_PUB_DATE", "warning")]


# --- adjudication ----------------------------------------------------------

def test_conservative_merge_takes_the_minimum():
    m = merge_codes([code("p", "PG-01", "yes", "a"), code("p", "PG-01", "no", "b")])
    assert m.value == "no" and m.conflict_resolved and m.contributing_coders == ("a", "b")
    m = merge_codes([code("p", "TR-01", 2, "a"), code("p", "TR-01", 1, "b"), code("p", "TR-01", UNKNOWN, "c")])
    assert m.value == 1 and m.conflict_resolved


def test_unknown_only_when_nobody_has_evidence():
    m = merge_codes([code("p", "PG-01", UNKNOWN, "a"), code("p", "PG-01", "yes", "b")])
    assert m.value == "yes" and not m.conflict_resolved
    m = merge_codes([code("p", "PG-01", UNKNOWN, "a"), code("p", "PG-01", UNKNOWN, "b")])
    assert m.is_unknown and m.evidence_class is None


def test_class_and_staleness_follow_the_minimum():
    low = code("p", "TR-01", 1, "a", stale=True, cls=EvidenceClass.THIRD_PARTY)
    high = code("p", "TR-01", 2, "b", stale=False, cls=EvidenceClass.PRIMARY)
    m = merge_codes([low, high])
    assert (m.value, m.stale, m.evidence_class) == (1, True, EvidenceClass.THIRD_PARTY)
    tie = code("p", "TR-01", 1, "c", stale=False, cls=EvidenceClass.PRIMARY)
    m = merge_codes([low, tie])
    assert (m.stale, m.evidence_class) == (False, EvidenceClass.PRIMARY)


def test_merge_errors():
    with pytest.raises(AipiError) as exc:
        merge_codes([])
    assert exc.value.code == "E_EMPTY"
    with pytest.raises(AipiError) as exc:
        merge_codes([code("p", "PG-01", "yes"), code("q", "PG-01", "yes")])
    assert exc.value.code == "E_KEY_MISMATCH"
    with pytest.raises(AipiError) as exc:
        merge_codes([code("p", "PG-01", "yes", "a"), code("p", "PG-01", 1, "b")])
    assert exc.value.code == "E_KIND_MISMATCH"


def test_adjudicate_covers_every_scored_pair(cohort):
    final = adjudicate(cohort)
    assert len(final) == 16 * 24
    d = dataset({"p1": {"PG-01": "yes"}})
    final = adjudicate(d)
    assert final[("p1", "ID-01")].is_unknown
    assert final[("p1", "ID-01")].contributing_coders == ()


ordinal_codes = st.lists(
    st.tuples(st.sampled_from([0, 1, 2, UNKNOWN]), st.booleans(), st.sampled_from(list(EvidenceClass))),
    min_size=1, max_size=5)


@given(ordinal_codes, st.randoms())
def test_merge_is_order_free_and_conservative(entries, rnd):
    codes = [code("p", "TR-01", v, f"c{i}", stale=s, cls=c) for i, (v, s, c) in enumerate(entries)]
    merged = merge_codes(codes)
    shuffled = list(codes)
    rnd.shuffle(shuffled)
    assert merge_codes(shuffled) == merged
    known = [c.value for c in codes if c.value != UNKNOWN]
    if known:
        assert merged.value == min(known)
    else:
        assert merged.is_unknown


# --- link checking ---------------------------------------------------------

def test_link_check_offline_attempts_nothing(cohort):
    statuses = link_check(cohort)
    assert len(statuses) == len(cohort.artifacts)
    assert {s.status for s in statuses} == {"not_attempted"}


class _Handler(BaseHTTPRequestHandler):
    def do_HEAD(self):
        if self.path == "/ok":
            self.send_response(200)
        elif self.path == "/moved":
            self.send_response(301)
            self.send_header("Location", "/ok")
        elif self.path == "/get-only":
            self.send_response(405)
        else:
            self.send_response(404)
        self.end_headers()

    def do_GET(self):
        self.send_response(200 if self.path == "/get-only" else 404)
        self.end_headers()

    def log_message(self, *args):
        pass


@pytest.mark.allow_network
def test_link_check_live_against_loopback():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    art = partial(EvidenceArtifact, retrieved_date=date(2025, 6, 1), source_kind=SourceKind.OTHER)
    d = Dataset((), (), (art("a-ok", f"{base}/ok"), art("b-moved", f"{base}/moved"),
                         art("c-gone", f"{base}/gone"), art("d-get", f"{base}/get-only")), ())
    try:
        statuses = {s.artifact_id: s for s in link_check(d, live=True, timeout=5)}
    finally:
        server.shutdown()
    assert statuses["a-ok"].status == "ok"
    assert (statuses["b-moved"].status, statuses["b-moved"].http_status) == ("redirect", 301)
    assert (statuses["c-gone"].status, statuses["c-gone"].http_status) == ("unreachable", 404)
    assert statuses["d-get"].status == "ok"


def test_raw_code_defaults():
    c = RawCode("p", "PG-01", "c", UNKNOWN, date(2025, 1, 1))
    assert c.evidence_refs == () and c.stale is False and c.key == ("p", "PG-01")


@pytest.mark.parametrize("value, stale", [("yes", False), ("no", True), (2, True), (0, False), ("unknown", False)])
def test_single_code_matches_general_merge(value, stale):
    # an unknown second coder contributes nothing but its name
    c = code("s", "PG-01", value, stale=stale)
    alone = merge_codes([c])
    padded = merge_codes([c, code("s", "PG-01", "unknown", coder="c2")])
    assert alone == replace(padded, contributing_coders=("c1",))
