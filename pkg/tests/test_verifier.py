import copy

import pytest

from cftv.casestudy import EXCERPT_SCOPES, build_case_study
from cftv.fixtures import FAITHFUL, build_fixture
from cftv.sim import SimulationConfig, Trace
from cftv.testgen import generate_cross_tests, generate_test_cases
from cftv.verifier import (
    Finding,
    ReferenceCache,
    Verdict,
    assemble_report,
    execute_test,
    has_findings,
    render_text,
    run_reference,
    suite_config,
    verify,
)


def fixture_report(name, cross=True, mutate=None):
    model, sim, binds, lib = build_fixture(name)
    if mutate:
        mutate(binds)
    suite = generate_test_cases(model, ["A", "B", "C"][: len(model["components"])], binds, lib, cross=cross)
    return verify(suite, SimulationConfig.from_dict(sim))


@pytest.fixture(scope="module")
def coasting():
    return build_case_study()


@pytest.fixture(scope="module")
def pipeline_report(coasting):
    model, sim, binds, lib = coasting
    suite = generate_cross_tests(model, EXCERPT_SCOPES["pipeline"], binds, lib)
    return verify(suite, SimulationConfig.from_dict(sim), cache=ReferenceCache())


def by_case(report, target, cut, template=None):
    for v in report["verdicts"]:
        if v["target"] == target and v["cut"] == list(cut) and (template is None or template in v["templates"]):
            return v
    raise KeyError((target, cut, template))


# ---------------------------------------------------------------------------
# reference runs


def test_reference_first_limit(coasting):
    ref = run_reference(SimulationConfig.from_dict(coasting[1]))
    assert ref.first("m_SlClassif.limit").t_ps == 28_800_000_000_000


def test_reference_empty_world():
    assert len(run_reference(SimulationConfig.from_dict({"entities": [], "stop_time": "1 s"}))) == 0


def test_reference_cache(tmp_path):
    model, sim, binds, lib = build_fixture("chain")
    config = SimulationConfig.from_dict(sim)
    cache = ReferenceCache(tmp_path)
    a = run_reference(config, cache)
    b = run_reference(config, cache)
    assert (cache.misses, cache.hits) == (1, 1)
    assert a.to_jsonl() == b.to_jsonl()
    cold = ReferenceCache(tmp_path)
    c = run_reference(config, cold)
    assert cold.hits == 1 and c.digest() == a.digest()


def test_one_reference_per_suite():
    model, sim, binds, lib = build_fixture("fan_out")
    suite = generate_test_cases(model, ["A", "B", "C"], binds, lib, cross=True)
    cache = ReferenceCache()
    verify(suite, SimulationConfig.from_dict(sim), cache=cache)
    assert cache.misses == 1
    verify(suite, SimulationConfig.from_dict(sim), cache=cache)
    assert cache.misses == 1 and cache.hits == 1


# ---------------------------------------------------------------------------
# oracle on the seeded fixtures


@pytest.mark.parametrize("name", FAITHFUL)
def test_faithful_fixtures_all_confirmed(name):
    report = fixture_report(name)
    assert {v["outcome"] for v in report["verdicts"]} == {"Confirmed"}
    assert report["discovered_paths"] == []
    assert not has_findings(report)


def test_and_leave_one_out_silent():
    report = fixture_report("single_and")
    (v,) = report["verdicts"]
    assert v["outcome"] == "Confirmed"
    assert [r["triggered"] for r in v["subset_runs"]] == [False, False]


def test_masked_and():
    report = fixture_report("masked_and")
    (v,) = report["verdicts"]
    assert v["outcome"] == "MaskedSubsetEffect"
    assert v["evidence"] and any(r["triggered"] for r in v["subset_runs"])


def test_extra_path():
    report = fixture_report("extra_path")
    assert [(p["cause"], p["ofm"]) for p in report["discovered_paths"]] == [(["A.b1"], "A.o2")]
    v = by_case(report, "A.o1", ["A.b1"])
    assert v["outcome"] == "Confirmed" and v["unmodeled_paths"][0]["ofm"] == "A.o2"


def test_extra_path_dedup_across_templates():
    def two_templates(binds):
        binds["literals"]["A.b1"]["templates"] = [
            {"template": "stuck_value", "params": {"value": "true"}},
            {"template": "stuck_value", "params": {"value": "1"}},
        ]

    report = fixture_report("extra_path", mutate=two_templates)
    assert report["summary"]["total"] == 3
    (path,) = report["discovered_paths"]
    assert path["cause"] == ["A.b1"] and len(path["tests"]) == 2


def test_injection_error():
    def bad_target(binds):
        binds["literals"]["A.f1"]["params"]["target"] = "A.nowhere"

    report = fixture_report("single_or", mutate=bad_target)
    v = by_case(report, "A.o", ["A.f1"])
    assert v["outcome"] == "InjectionError" and "nowhere" in v["message"]
    assert has_findings(report)


def test_execute_test_directly():
    model, sim, binds, lib = build_fixture("single_or")
    suite = generate_test_cases(model, ["A"], binds, lib)
    cfg = suite_config(SimulationConfig.from_dict(sim), suite)
    ref = run_reference(cfg)
    verdict = execute_test(suite.cases[0], ref, cfg, suite.library)
    assert isinstance(verdict, Verdict) and verdict.outcome == "Confirmed"
    assert verdict.evidence["reference"] == ref.digest()


# ---------------------------------------------------------------------------
# case study


def test_camera_defect_confirmed_as_halt(pipeline_report):
    v = by_case(pipeline_report, "camera.omission_of_image", ["camera.camera_defect"])
    assert v["outcome"] == "Confirmed"
    target = next(m for m in v["monitors"] if m["role"] == "target")
    assert "halt" in target["triggered_classes"]


def test_horizontal_line_late_discovery(pipeline_report):
    v = by_case(pipeline_report, "coastingAssist.erroneous_hint", ["camera.pixel_failure"], "pixel_line_h")
    assert v["outcome"] == "NotReproduced"
    assert {"cause": ["camera.pixel_failure"], "ofm": "coastingAssist.hint_late", "class": "late", "test": v["id"]} in v[
        "unmodeled_paths"
    ]


def test_late_path_suggestion(pipeline_report):
    entry = next(p for p in pipeline_report["discovered_paths"] if p["ofm"] == "coastingAssist.hint_late")
    assert entry["classes"] == ["late"]
    assert {"component": "slClassif", "ifm": "slClassif.erroneous_circle_recognition", "ofm": "slClassif.sl_late"} in entry[
        "suggestions"
    ]


def test_report_shape(pipeline_report):
    ids = [v["id"] for v in pipeline_report["verdicts"]]
    assert ids == sorted(ids)
    s = pipeline_report["summary"]
    assert s["total"] == len(ids)
    assert s["unmodeled_path"] == len(pipeline_report["discovered_paths"])
    assert s["confirmed"] + s["not_reproduced"] + s["masked_subset_effect"] + s["injection_error"] == s["total"]
    for v in pipeline_report["verdicts"]:
        if v["outcome"] != "Confirmed":
            assert v["evidence"]
    text = render_text(pipeline_report)
    assert text.splitlines()[1].startswith("| Scope") and "Failure monitor" in text and "Verdict" in text


def test_assemble_all_confirmed():
    vs = [Verdict(f"t{i}", "Confirmed") for i in (2, 1)]
    report = assemble_report(vs, {"suite_id": "x"})
    assert [v["id"] for v in report["verdicts"]] == ["t1", "t2"]
    assert report["summary"] == {
        "total": 2,
        "confirmed": 2,
        "not_reproduced": 0,
        "masked_subset_effect": 0,
        "injection_error": 0,
        "unmodeled_path": 0,
        "warnings": 0,
    }


def test_assemble_dedups_findings():
    f1 = Finding(("a.b",), "c.d", "late", "t1")
    f2 = Finding(("a.b",), "c.d", "content", "t2")
    report = assemble_report([Verdict("t1", "Confirmed", findings=(f1,)), Verdict("t2", "Confirmed", findings=(f2,))], {})
    assert report["discovered_paths"] == [{"cause": ["a.b"], "ofm": "c.d", "classes": ["content", "late"], "tests": ["t1", "t2"]}]


def test_parallel_matches_serial():
    model, sim, binds, lib = build_fixture("extra_path")
    suite = generate_test_cases(model, ["A"], binds, lib, cross=True)
    config = SimulationConfig.from_dict(sim)
    assert verify(suite, config, jobs=2) == verify(suite, config, jobs=1)


def test_trace_roundtrip_is_stable():
    model, sim, binds, lib = build_fixture("chain")
    ref = run_reference(SimulationConfig.from_dict(sim))
    assert Trace.from_jsonl(ref.to_jsonl()).to_jsonl() == ref.to_jsonl()
    assert copy.deepcopy(ref).digest() == ref.digest()
