"""Seeded synthetic models for oracle checks.

Each fixture pairs a CFT with a Boolean simulation.  The faithful ones
realize their CFT exactly; two carry a deliberate defect:

* ``masked_and``: the CFT says AND(f1, f2) but the simulation propagates f1 alone.
* ``extra_path``: b1 also drives o2 in the simulation, which the CFT omits.
"""

from __future__ import annotations

from .casestudy import _element, _fm, _one_shot

FAITHFUL = ("single_or", "single_and", "chain", "fan_out")
DEFECTIVE = ("masked_and", "extra_path")


def _component(cid, inports, outports, ifms=(), ofms=(), bes=(), drives=None):
    return {
        "id": cid,
        "inports": list(inports),
        "outports": list(outports),
        "cft": _element(list(ifms), list(ofms), [{"id": b, "name": b, "fit": 10.0} for b in bes], drives or {}),
    }


def _entity(name, faults=(), inputs=(), outputs=None):
    return {"type": "BoolLogic", "name": name, "params": {"faults": list(faults), "inputs": list(inputs), "outputs": outputs or {}}}


def _gate(kind, *args):
    return f"{kind}({', '.join(args)})"


def _two_fault(kind_cft, logic):
    model = {
        "components": [
            _component(
                "A",
                [],
                ["p"],
                ofms=[_fm("o", "content", "p")],
                bes=["f1", "f2"],
            )
        ],
        "connections": [],
    }
    # both faults feed one explicit gate
    cft = model["components"][0]["cft"]
    cft["gates"] = [{"id": "g", "kind": kind_cft}]
    cft["edges"] = [{"src": "f1", "dst": "g"}, {"src": "f2", "dst": "g"}, {"src": "g", "dst": "o"}]
    sim = [_entity("A", ["f1", "f2"], outputs={"p": {"o": logic}})]
    return model, sim, [], {"A.f1": "A.f1", "A.f2": "A.f2"}, {"A.o": "A.o"}


def _chain():
    model = {
        "components": [
            _component("A", [], ["p"], ofms=[_fm("o", "content", "p")], bes=["f1"], drives={"o": ["f1"]}),
            _component(
                "B",
                ["in"],
                ["q"],
                ifms=[_fm("o", "content", "in")],
                ofms=[_fm("o2", "content", "q")],
                bes=["f2"],
                drives={"o2": ["o", "f2"]},
            ),
        ],
        "connections": [{"from": "A.p", "to": "B.in"}],
    }
    sim = [
        _entity("A", ["f1"], outputs={"p": {"o": "f1"}}),
        _entity("B", ["f2"], ["in"], {"q": {"o2": _gate("OR", "in.o", "f2")}}),
    ]
    lits = {"A.f1": "A.f1", "B.f2": "B.f2", "B.o": "A.f1"}
    return model, sim, [("A.p", "B.in")], lits, {"A.o": "A.o", "B.o2": "B.o2"}


def _fan_out():
    model = {
        "components": [
            _component("A", [], ["p"], ofms=[_fm("o", "content", "p")], bes=["f1"], drives={"o": ["f1"]}),
            _component("B", ["in"], ["q"], ifms=[_fm("o", "content", "in")], ofms=[_fm("ob", "content", "q")], drives={"ob": ["o"]}),
            _component(
                "C",
                ["in"],
                ["r"],
                ifms=[_fm("o", "content", "in")],
                ofms=[_fm("oc", "content", "r")],
                bes=["f3"],
                drives={"oc": ["o", "f3"]},
            ),
        ],
        "connections": [{"from": "A.p", "to": "B.in"}, {"from": "A.p", "to": "C.in"}],
    }
    sim = [
        _entity("A", ["f1"], outputs={"p": {"o": "f1"}}),
        _entity("B", [], ["in"], {"q": {"ob": "in.o"}}),
        _entity("C", ["f3"], ["in"], {"r": {"oc": _gate("OR", "in.o", "f3")}}),
    ]
    lits = {"A.f1": "A.f1", "C.f3": "C.f3", "B.o": "A.f1", "C.o": "A.f1"}
    return model, sim, [("A.p", "B.in"), ("A.p", "C.in")], lits, {"A.o": "A.o", "B.ob": "B.ob", "C.oc": "C.oc"}


def _extra_path():
    model = {
        "components": [
            _component(
                "A",
                [],
                ["p1", "p2"],
                ofms=[_fm("o1", "content", "p1"), _fm("o2", "content", "p2")],
                bes=["b1", "b2"],
                drives={"o1": ["b1"], "o2": ["b2"]},
            )
        ],
        "connections": [],
    }
    sim = [_entity("A", ["b1", "b2"], outputs={"p1": {"o1": "b1"}, "p2": {"o2": _gate("OR", "b1", "b2")}})]
    return model, sim, [], {"A.b1": "A.b1", "A.b2": "A.b2"}, {"A.o1": "A.o1", "A.o2": "A.o2"}


BUILDERS = {
    "single_or": lambda: _two_fault("OR", _gate("OR", "f1", "f2")),
    "single_and": lambda: _two_fault("AND", _gate("AND", "f1", "f2")),
    "chain": _chain,
    "fan_out": _fan_out,
    "masked_and": lambda: _two_fault("AND", "f1"),
    "extra_path": _extra_path,
}


def build_fixture(name):
    """(model doc, sim doc, bindings doc, BTM library) for a seeded fixture."""
    model, entities, links, literals, ofms = BUILDERS[name]()
    sim = {
        "entities": entities,
        "bindings": [{"from": a, "to": b} for a, b in links],
        "trace": ["*"],
        "stop_time": "2 s",
        "seed": 0,
    }
    bindings = {
        "literals": {lit: {"templates": ["stuck_value"], "params": {"target": path, "value": "true"}} for lit, path in literals.items()},
        "ofms": {ofm: {"signal": sig} for ofm, sig in ofms.items()},
    }
    return model, sim, bindings, {"stuck_value": _one_shot("stuck_value")}


def fixture_files():
    out = {}
    for name in BUILDERS:
        model, sim, binds, lib = build_fixture(name)
        files = {f"{name}.cft.json": model, f"{name}.sim.json": sim, f"{name}.bind.json": binds}
        files.update({f"btm/{k}.btm.json": v for k, v in lib.items()})
        out[name] = files
    return out
