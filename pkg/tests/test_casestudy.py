import pytest

from cftv.casestudy import (
    LINKS,
    EXCERPT_SCOPES,
    build_case_study,
    build_refined_case_study,
    case_study_files,
    channel_entity_name,
    load_shipped,
    refine_channels,
)
from cftv.fixtures import fixture_files
from cftv.model import load_system, validate
from cftv.sim import SimulationConfig, build_simulation
from cftv.testgen import dry_run, generate_test_cases
from cftv.timeunits import S
from cftv.verifier import verify


def test_shipped_data_in_sync():
    assert load_shipped("coasting") == case_study_files()
    for name, files in fixture_files().items():
        assert load_shipped(f"fixtures/{name}") == files


def test_case_study_contents():
    model, sim, binds, lib = build_case_study()
    assert [c["id"] for c in model["components"]] == ["camera", "circleRecog", "slClassif", "coastingAssist", "HMI"]
    assert {"delay", "freeze_frame", "omission", "pixel_line_h", "pixel_line_v", "pixel_scatter", "stuck_value"} <= set(lib)
    assert validate(load_system(model)) == []
    for scope in EXCERPT_SCOPES.values():
        assert generate_test_cases(model, scope, binds, lib).cases


def test_refinement_adds_one_channel_per_link():
    _, sim, _, _ = build_case_study()
    refined = refine_channels(sim)
    added = [e for e in refined["entities"] if e["type"] == "Channel"]
    assert len(added) == len(sim["bindings"]) == len(LINKS)
    assert refined["entities"][: len(sim["entities"])] == sim["entities"]
    assert refine_channels(sim, "direct") == sim
    with pytest.raises(ValueError):
        refine_channels(sim, "pin")


def test_refined_model_is_valid():
    model, sim, binds, lib = build_refined_case_study()
    assert validate(load_system(model)) == []
    config = SimulationConfig.from_dict(sim)
    suite = generate_test_cases(model, EXCERPT_SCOPES["camera"], binds, lib)
    assert dry_run(suite, config) == []


def test_reference_survives_refinement():
    _, sim, _, _ = build_case_study()
    direct = build_simulation(SimulationConfig.from_dict(sim)).run_until(30 * S)
    tlm = build_simulation(SimulationConfig.from_dict(refine_channels(sim))).run_until(30 * S)
    # sub-millisecond bus latency does not move the first published limit
    assert direct.first("m_SlClassif.limit").t_ps == 28_800_000_000_000
    hint = tlm.first("m_CoastingAssist.speed_limit")
    assert abs(hint.t_ps - direct.first("m_CoastingAssist.speed_limit").t_ps) < S // 100


def test_same_verdicts_at_both_levels():
    model, sim, binds, lib = build_case_study()
    suite = generate_test_cases(model, EXCERPT_SCOPES["camera"], binds, lib)
    a = verify(suite, SimulationConfig.from_dict(sim))
    b = verify(suite, SimulationConfig.from_dict(refine_channels(sim)))
    assert [(v["id"], v["outcome"]) for v in a["verdicts"]] == [(v["id"], v["outcome"]) for v in b["verdicts"]]


def test_message_loss_causes_missing_hint():
    model, sim, binds, lib = build_refined_case_study()
    channel = channel_entity_name("slClassif.limit", "coastingAssist.limit")
    suite = generate_test_cases(model, [channel, "coastingAssist"], binds, lib)
    cases = [c for c in suite.cases if c.cut == (f"{channel}.message_loss",)]
    assert [c.target for c in cases] == ["coastingAssist.missing_hint"]
    report = verify(suite, SimulationConfig.from_dict(sim))
    (v,) = [v for v in report["verdicts"] if v["id"] == cases[0].id]
    assert v["outcome"] == "Confirmed"
    target = next(m for m in v["monitors"] if m["role"] == "target")
    assert "halt" in target["triggered_classes"]
