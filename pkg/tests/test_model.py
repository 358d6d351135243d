import copy

import numpy as np
import pytest

from cftv.casestudy import build_case_study
from cftv.errors import DanglingReference, DuplicateId, PropagationCycle, SchemaError, UnknownTop, UnsupportedGate
from cftv.model import dump_system, load_system, to_classic_fault_tree, validate

from helpers import evaluate_all, fm, random_composition, seeded


def one(cft, inports=(), outports=("out",), cid="A"):
    return {"components": [{"id": cid, "inports": list(inports), "outports": list(outports), "cft": cft}], "connections": []}


def test_case_study_has_five_components():
    model = load_system(build_case_study()[0])
    assert sorted(c.id for c in model.components) == ["HMI", "camera", "circleRecog", "coastingAssist", "slClassif"]
    assert validate(model) == []


def test_empty_model():
    model = load_system({"components": [], "connections": []})
    assert model.components == ()
    assert validate(model) == []


def test_dangling_connection():
    doc = copy.deepcopy(build_case_study()[0])
    doc["connections"].append({"from": "camera.out99", "to": "HMI.image"})
    with pytest.raises(DanglingReference):
        load_system(doc)


def test_duplicate_ids():
    doc = one({"basic_events": [{"id": "b", "name": "b"}], "gates": [{"id": "b", "kind": "OR"}]})
    with pytest.raises(DuplicateId):
        load_system(doc)
    doc = {"components": [{"id": "A"}, {"id": "A"}], "connections": []}
    with pytest.raises(DuplicateId):
        load_system(doc)


def test_schema_errors():
    with pytest.raises(SchemaError):
        load_system([])
    with pytest.raises(SchemaError):
        load_system(one({"ofms": [{"id": "o", "class": "bogus", "port": "out"}]}))
    with pytest.raises(UnsupportedGate):
        load_system(one({"gates": [{"id": "n", "kind": "NOT"}]}))


def test_mtbf_converted_to_fit():
    model = load_system(one({"basic_events": [{"id": "b", "name": "b", "mtbf_hours": 1e6}]}))
    assert model.components[0].cft.basic_events[0].fit == pytest.approx(1000.0)


def test_gate_cycle_diagnostic():
    cft = {
        "basic_events": [{"id": "b", "name": "b"}],
        "gates": [{"id": "g1", "kind": "OR"}, {"id": "g2", "kind": "OR"}],
        "edges": [{"src": "b", "dst": "g1"}, {"src": "g2", "dst": "g1"}, {"src": "g1", "dst": "g2"}, {"src": "g1", "dst": "o"}],
        "ofms": [fm("o", "out")],
    }
    codes = [d.code for d in validate(load_system(one(cft)))]
    assert codes.count("cycle") == 1


def test_and_arity_diagnostic():
    cft = {
        "basic_events": [{"id": "b", "name": "b"}],
        "gates": [{"id": "g", "kind": "AND"}],
        "edges": [{"src": "b", "dst": "g"}, {"src": "g", "dst": "o"}],
        "ofms": [fm("o", "out")],
    }
    diags = validate(load_system(one(cft)))
    assert [d.code for d in diags] == ["and-arity"]
    assert "AND gate arity < 2" in diags[0].message


def test_ofm_needs_one_edge_and_fan_in():
    cft = {"basic_events": [{"id": "b", "name": "b"}], "ofms": [fm("o", "out")]}
    assert [d.code for d in validate(load_system(one(cft)))] == ["ofm-edges"]
    doc = {
        "components": [
            {"id": "A", "outports": ["p"]},
            {"id": "B", "outports": ["p"]},
            {"id": "C", "inports": ["i"]},
        ],
        "connections": [{"from": "A.p", "to": "C.i"}, {"from": "B.p", "to": "C.i"}],
    }
    assert [d.code for d in validate(load_system(doc))] == ["fan-in"]


def test_round_trip():
    for doc in [build_case_study()[0]] + [random_composition(seeded(s))[0] for s in range(20)]:
        model = load_system(doc)
        assert load_system(dump_system(model)) == model
        assert dump_system(load_system(dump_system(model))) == dump_system(model)


def test_classic_tree_single_event():
    tree = to_classic_fault_tree(load_system(build_case_study()[0]), "camera.omission_of_image")
    assert tree.top == "camera.camera_defect"
    assert tree.leaves() == ["camera.camera_defect"]


def test_classic_tree_external_ifm():
    cft = {
        "ifms": [fm("a", "in")],
        "basic_events": [{"id": "b1", "name": "b1"}],
        "gates": [{"id": "g", "kind": "OR"}],
        "edges": [{"src": "a", "dst": "g"}, {"src": "b1", "dst": "g"}, {"src": "g", "dst": "o"}],
        "ofms": [fm("o", "out")],
    }
    tree = to_classic_fault_tree(load_system(one(cft, inports=["in"])), "A.o")
    assert tree.nodes[tree.top].kind == "OR"
    assert tree.nodes["A.a"].kind == "EXTERNAL"
    assert tree.leaves() == ["A.a", "A.b1"]


def test_classic_tree_unknown_top():
    with pytest.raises(UnknownTop):
        to_classic_fault_tree(load_system(build_case_study()[0]), "camera.nope")


def test_propagation_cycle():
    def comp(cid, other):
        return {
            "id": cid,
            "inports": ["i"],
            "outports": ["p"],
            "cft": {"ifms": [fm(f"o{other}", "i")], "ofms": [fm(f"o{cid}", "p")], "edges": [{"src": f"o{other}", "dst": f"o{cid}"}]},
        }

    doc = {"components": [comp("A", "B"), comp("B", "A")], "connections": [{"from": "A.p", "to": "B.i"}, {"from": "B.p", "to": "A.i"}]}
    model = load_system(doc)
    assert any(d.code == "propagation-cycle" for d in validate(model))
    with pytest.raises(PropagationCycle):
        to_classic_fault_tree(model, "A.oA")


def _tree_truth(tree, literals):
    n = len(literals)
    out = np.zeros(1 << n, dtype=bool)
    for m in range(1 << n):
        out[m] = tree.evaluate({lit for i, lit in enumerate(literals) if (m >> i) & 1})
    return out


def test_classic_tree_hmi_sl_late_matches_brute_force():
    doc = build_case_study()[0]
    tree = to_classic_fault_tree(load_system(doc), "HMI.sl_late")
    literals = sorted(
        f"{c['id']}.{b['id']}" for c in doc["components"] for b in c["cft"]["basic_events"]
    )
    assert len(literals) <= 12
    assert set(tree.leaves()) <= set(literals)
    assert np.array_equal(_tree_truth(tree, literals), evaluate_all(doc, "HMI.sl_late", literals))


@pytest.mark.parametrize("seed", range(60))
def test_classic_tree_preserves_boolean_function(seed):
    doc, top, literals = random_composition(seeded(seed), max_literals=8)
    tree = to_classic_fault_tree(load_system(doc), top)
    assert np.array_equal(_tree_truth(tree, literals), evaluate_all(doc, top, literals))


@pytest.mark.parametrize("seed", range(30))
def test_validate_flags_mutations(seed):
    rng = seeded(1000 + seed)
    doc, _, _ = random_composition(rng)
    assert validate(load_system(doc)) == []
    comp = rng.choice(doc["components"])["cft"]
    mutation = rng.choice(["drop_ofm_edge", "double_ofm_edge", "and_arity"])
    if mutation == "drop_ofm_edge":
        o = comp["ofms"][0]["id"]
        comp["edges"] = [e for e in comp["edges"] if e["dst"] != o]
        expect = "ofm-edges"
    elif mutation == "double_ofm_edge":
        o = comp["ofms"][0]["id"]
        src = next(e["src"] for e in comp["edges"] if e["dst"] != o)
        comp["edges"].append({"src": src, "dst": o})
        expect = "ofm-edges"
    else:
        comp["gates"].append({"id": "lonely", "kind": "AND"})
        comp["edges"].append({"src": comp["edges"][0]["src"], "dst": "lonely"})
        expect = "and-arity"
    assert expect in [d.code for d in validate(load_system(doc))]
