from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aipi.canonical import to_nanos
from aipi.errors import AipiError
from aipi.evidence_model import PILLARS, EvidenceClass, IndicatorDef, Pillar, Subject, SubjectKind
from aipi.release import score_dataset
from aipi.score import (
    FloorPolicy,
    PillarScore,
    check_floors,
    check_weights,
    known_only_report,
    pillar_scores,
    provider_score,
    render_known_only,
    subject_score,
)
from helpers import B, dataset

TR = [IndicatorDef(f"TR-0{i}", Pillar.TR, B) for i in range(1, 5)]


def pillar(p: Pillar, values):
    defs = [IndicatorDef(f"{p.value}-0{i}", p, B) for i in range(1, len(values) + 1)]
    return pillar_scores({d.id: v for d, v in zip(defs, values)}, defs)


def even_subject(sid, value):
    return subject_score(sid, {p: pillar(p, [value, value]) for p in PILLARS})


def test_pillar_with_one_unknown_of_four():
    ps = pillar_scores({"TR-01": 1.0, "TR-02": 0.5, "TR-03": 0.0, "TR-04": None}, TR)
    assert (ps.s_known, ps.s_evid, ps.s_opt, ps.coverage) == (0.5, 0.375, 0.625, 0.75)
    assert (ps.n_indicators, ps.n_known) == (4, 3)


def test_all_unknown_pillar():
    ps = pillar_scores({d.id: None for d in TR}, TR)
    assert (ps.s_known, ps.s_evid, ps.s_opt, ps.coverage) == (None, 0.0, 1.0, 0.0)


def test_coverage_interval_splits_third_party():
    classes = {"TR-01": EvidenceClass.PRIMARY, "TR-02": EvidenceClass.THIRD_PARTY,
               "TR-03": EvidenceClass.PRIMARY}
    ps = pillar_scores({"TR-01": 1.0, "TR-02": 1.0, "TR-03": 0.0, "TR-04": None}, TR, classes)
    assert (ps.coverage_min, ps.coverage, ps.coverage_max) == (0.5, 0.75, 0.75)


def test_thirds_round_half_even_to_nine_decimals():
    defs = TR[:3]
    ps = pillar_scores({"TR-01": 1.0, "TR-02": None, "TR-03": None}, defs)
    assert ps.s_evid == 0.333333333 and ps.s_opt == 1.0 and ps.coverage == 0.333333333


@pytest.mark.parametrize("values, defs, expected", [
    ({}, [], "E_EMPTY_PILLAR"),
    ({"TR-01": 1.0, "PG-01": 1.0}, [TR[0], IndicatorDef("PG-01", Pillar.PG, B)], "E_MIXED_PILLAR"),
    ({"TR-01": 1.0}, TR[:2], "E_MISSING_VALUE"),
    ({"TR-01": 1.5}, TR[:1], "E_VALUE_DOMAIN"),
    ({"TR-01": float("nan")}, TR[:1], "E_VALUE_DOMAIN"),
])
def test_pillar_errors(values, defs, expected):
    with pytest.raises(AipiError) as exc:
        pillar_scores(values, defs)
    assert exc.value.code == expected


def test_subject_is_mean_of_pillars():
    sc = subject_score("s", [pillar(Pillar.PG, [1.0, 1.0]), pillar(Pillar.ID, [0.0, None]),
                             pillar(Pillar.TR, [0.5, 0.5]), pillar(Pillar.AC, [None, None])])
    assert sc.aipi_evid == 0.375
    assert sc.aipi_opt == 0.75
    assert sc.aipi_known is None  # AC has no evidence
    assert sc.mean_coverage == 0.625


def test_subject_requires_four_pillars():
    with pytest.raises(AipiError) as exc:
        subject_score("s", [pillar(Pillar.PG, [1.0])])
    assert exc.value.code == "E_MISSING_PILLAR"
    with pytest.raises(AipiError) as exc:
        subject_score("s", [pillar(Pillar.PG, [1.0])] * 2)
    assert exc.value.code == "E_DUPLICATE_PILLAR"


def test_weights_must_cover_pillars_and_sum_to_one():
    with pytest.raises(AipiError):
        check_weights({Pillar.PG: 1.0})
    with pytest.raises(AipiError):
        check_weights({p: 0.3 for p in PILLARS})
    w = {Pillar.PG: 0.4, Pillar.ID: 0.2, Pillar.TR: 0.2, Pillar.AC: 0.2}
    sc = subject_score("s", {p: pillar(p, [1.0 if p is Pillar.PG else 0.0]) for p in PILLARS}, w)
    assert sc.aipi_evid == 0.4


def test_provider_mean_over_systems():
    prov = Subject("p", "p", SubjectKind.PROVIDER)
    s1, s2 = Subject("p-a", "a", SubjectKind.SYSTEM, "p"), Subject("p-b", "b", SubjectKind.SYSTEM, "p")
    ps = provider_score(prov, [(s2, even_subject("p-b", 0.0)), (s1, even_subject("p-a", 1.0))])
    assert (ps.aipi_evid, ps.aipi_known, ps.aipi_opt) == (0.5, 0.5, 0.5)
    assert ps.k_systems == 2 and ps.system_ids == ("p-a", "p-b")


def test_provider_without_systems_passes_through():
    prov = Subject("p", "p", SubjectKind.PROVIDER)
    own = even_subject("p", 0.5)
    ps = provider_score(prov, [], own)
    assert (ps.aipi_evid, ps.aipi_known, ps.k_systems) == (0.5, 0.5, 0)


def test_provider_errors():
    prov = Subject("p", "p", SubjectKind.PROVIDER)
    other = Subject("q-a", "a", SubjectKind.SYSTEM, "q")
    with pytest.raises(AipiError) as exc:
        provider_score(prov, [(other, even_subject("q-a", 1.0))])
    assert exc.value.code == "E_WRONG_PROVIDER"
    with pytest.raises(AipiError) as exc:
        provider_score(other, [])
    assert exc.value.code == "E_NOT_PROVIDER"
    with pytest.raises(AipiError) as exc:
        provider_score(prov, [])
    assert exc.value.code == "E_NO_SCORE"


def test_rounding_does_not_compound_across_levels():
    # thirds at every level: rounding each level in turn would drift by several 1e-9 units
    values = {"s1": {"PG-01": "yes"}, "s2": {"PG-01": "yes", "ID-01": "yes"}, "s3": {"TR-01": "yes"}}
    kinds = {f"{p.value}-0{i}": B for p in PILLARS for i in (1, 2, 3)}
    d = dataset(values, kinds, systems={"s1": "p", "s2": "p", "s3": "p"})
    res = score_dataset(d)
    exact = Fraction(1, 3) * (Fraction(1, 12) + Fraction(2, 12) + Fraction(1, 12))
    got = Fraction(to_nanos(res.provider_scores["p"].aipi_evid), 10**9)
    assert abs(got - exact) <= Fraction(1, 2 * 10**9)


unit = st.one_of(st.none(), st.integers(0, 10**9).map(lambda n: n / 10**9))


@given(st.lists(unit, min_size=1, max_size=12))
def test_pillar_bounds_and_identities(values):
    defs = [IndicatorDef(f"ID-{i:02d}", Pillar.ID, B) for i in range(1, len(values) + 1)]
    ps = pillar_scores({d.id: v for d, v in zip(defs, values)}, defs)
    n, k = ps.n_indicators, ps.n_known
    E, O = to_nanos(ps.s_evid), to_nanos(ps.s_opt)
    assert 0 <= ps.s_evid <= ps.s_opt <= 1
    assert abs((O - E) - Fraction((n - k) * 10**9, n)) <= 1
    if k:
        K = to_nanos(ps.s_known)
        assert ps.s_evid <= ps.s_known <= ps.s_opt
        assert abs(E - Fraction(k, n) * K) <= 1


# --- floors ----------------------------------------------------------------

def floor_subject(evid_per_pillar, coverage_known=2, n=2):
    pillars = {}
    for p in PILLARS:
        vals = [evid_per_pillar * n / coverage_known] * coverage_known + [None] * (n - coverage_known)
        assert all(v is None or v <= 1 for v in vals)
        defs = [IndicatorDef(f"{p.value}-0{i}", p, B) for i in range(1, n + 1)]
        pillars[p] = pillar_scores({d.id: v for d, v in zip(defs, vals)}, defs)
    return subject_score("s", pillars)


def test_floor_pass_and_each_reason():
    policy = FloorPolicy(required_artifacts=("AC-01",))
    good = floor_subject(0.5)
    assert check_floors(good, policy, {"AC-01": 1.0}).passed
    v = check_floors(good, policy, {"AC-01": None})
    assert [r.code for r in v.reasons] == ["REQ_ARTIFACT_MISSING"] and v.verdict == "fail"
    v = check_floors(good, policy, {"AC-01": 0.0})
    assert [r.code for r in v.reasons] == ["REQ_ARTIFACT_MISSING"]
    low = floor_subject(0.1)
    codes = [r.code for r in check_floors(low, policy, {"AC-01": 1.0}).reasons]
    assert codes == ["OVERALL_EVID_BELOW_FLOOR"] + ["PILLAR_EVID_BELOW_FLOOR"] * 4
    thin = floor_subject(0.2, coverage_known=1, n=5)
    lenient = FloorPolicy(min_overall_evid=0.1, min_pillar_evid=0.1, required_artifacts=("AC-01",))
    codes = [r.code for r in check_floors(thin, lenient, {"AC-01": 1.0}).reasons]
    assert codes == ["PILLAR_COVERAGE_BELOW_FLOOR"] * 4 + ["MEAN_COVERAGE_BELOW_FLOOR"]


def test_floor_thresholds_are_inclusive():
    sc = floor_subject(0.25)
    policy = FloorPolicy(min_overall_evid=0.25, min_pillar_evid=0.25)
    assert check_floors(sc, policy, {}).passed


def test_floor_policy_validation():
    with pytest.raises(AipiError) as exc:
        check_floors(floor_subject(0.5), FloorPolicy(required_artifacts=("ZZ-01",)), {})
    assert exc.value.code == "E_UNKNOWN_REQUIRED_ID"
    with pytest.raises(AipiError) as exc:
        FloorPolicy(min_overall_evid=1.5)
    assert exc.value.code == "E_BAD_POLICY"
    with pytest.raises(AipiError) as exc:
        FloorPolicy.from_json({"min_overal_evid": 0.2})
    assert exc.value.code == "E_UNKNOWN_FIELD"
    p = FloorPolicy(required_artifacts=("TR-01", "AC-01"))
    assert FloorPolicy.from_json(p.to_json()) == p


# --- known-only report -----------------------------------------------------

def test_known_only_contributions_add_up(cohort):
    res = score_dataset(cohort)
    rows = known_only_report(res.provider_scores)
    assert [r["provider_id"] for r in rows][:1] and len(rows) == 12
    for r in rows:
        if r["aipi_known"] is None:
            assert set(r["contributions"].values()) == {None}
            continue
        total = sum(to_nanos(v) for v in r["contributions"].values())
        assert total == to_nanos(r["aipi_known"])
    known = [r["aipi_known"] for r in rows if r["aipi_known"] is not None]
    assert known == sorted(known, reverse=True)
    text = render_known_only(rows)
    assert text.splitlines()[0].startswith("provider") and len(text.splitlines()) == 13


def test_score_subjects_independent_of_workers(cohort):
    assert score_dataset(cohort, workers=1).subject_scores == score_dataset(cohort, workers=4).subject_scores


def test_pillar_score_equality_ignores_exact_cache():
    a = pillar(Pillar.PG, [0.5, None])
    b = PillarScore(Pillar.PG, a.s_evid, a.s_known, a.s_opt, a.coverage, a.coverage_min,
                    a.coverage_max, a.n_indicators, a.n_known)
    assert a == b
