import itertools
import math

import pytest

from cftv.analysis import (
    Scope,
    fault_tree_cut_sets,
    minimal_cut_sets,
    minimize,
    model_rates,
    reduce_scope,
    scope_interface,
    top_probability,
)
from cftv.casestudy import EXCERPT_SCOPES, build_case_study
from cftv.errors import EmptyScope, MissingRate, UnknownComponent, UnknownTop
from cftv.model import load_system, to_classic_fault_tree

from helpers import evaluate_all, fm, minimal_true_sets, random_composition, seeded


@pytest.fixture(scope="module")
def coasting():
    return load_system(build_case_study()[0])


def element(gates, edges, bes=("b1", "b2", "b3")):
    doc = {
        "components": [
            {
                "id": "A",
                "outports": ["out"],
                "cft": {
                    "basic_events": [{"id": b, "name": b, "fit": 10.0} for b in bes],
                    "gates": [{"id": g, "kind": k} for g, k in gates],
                    "edges": [{"src": s, "dst": d} for s, d in edges],
                    "ofms": [fm("top", "out")],
                },
            }
        ],
        "connections": [],
    }
    return load_system(doc).components[0].cft


def cuts(mca):
    return {frozenset(c) for c in mca.as_sets()}


def test_single_or():
    e = element([("g", "OR")], [("b1", "g"), ("b2", "g"), ("g", "top")])
    assert cuts(minimal_cut_sets(e, "top")) == {frozenset({"b1"}), frozenset({"b2"})}


def test_absorption():
    e = element([("a", "AND"), ("o", "OR")], [("b1", "o"), ("b2", "o"), ("b1", "a"), ("o", "a"), ("a", "top")])
    assert cuts(minimal_cut_sets(e, "top")) == {frozenset({"b1"})}


def test_unknown_top():
    e = element([], [("b1", "top")])
    with pytest.raises(UnknownTop):
        minimal_cut_sets(e, "b1")


def test_minimize():
    assert minimize([{"a"}, {"a", "b"}, {"b", "c"}, {"b", "c"}]) == [frozenset({"a"}), frozenset({"b", "c"})]


def test_scope_camera(coasting):
    iface = scope_interface(coasting, Scope.of(coasting, ["camera"]))
    assert iface.input_failure_modes == ()
    assert {"camera.omission_of_image", "camera.frozen_image"} <= set(iface.ofm_ids())
    assert {"camera.camera_defect", "camera.content_failure", "camera.pixel_failure", "camera.samptime_deviation"} <= set(
        iface.literal_ids()
    )


def test_scope_whole_system(coasting):
    iface = scope_interface(coasting, Scope.whole(coasting))
    assert iface.input_failure_modes == ()
    hmi = coasting.component("HMI").cft
    assert set(iface.ofm_ids()) == {f"HMI.{o.id}" for o in hmi.ofms}


def test_scope_coasting_assist(coasting):
    iface = scope_interface(coasting, Scope.of(coasting, ["coastingAssist"]))
    ifms = {e.id for e in iface.input_failure_modes}
    assert {"coastingAssist.sl_omission", "coastingAssist.di_omission"} <= ifms
    assert {"coastingAssist.missing_hint", "coastingAssist.erroneous_hint"} <= set(iface.ofm_ids())


def test_scope_errors(coasting):
    with pytest.raises(EmptyScope):
        Scope.of(coasting, [])
    with pytest.raises(UnknownComponent):
        Scope.of(coasting, ["nope"])


def test_reduce_single_component_is_identity(coasting):
    e = reduce_scope(coasting, Scope.of(coasting, ["camera"]))
    assert cuts(minimal_cut_sets(e, "camera.corrupted_image")) == {frozenset({"camera.pixel_failure"})}


def test_reduce_pipeline_erroneous_hint(coasting):
    e = reduce_scope(coasting, Scope.of(coasting, EXCERPT_SCOPES["pipeline"]))
    lits = set().union(*cuts(minimal_cut_sets(e, "coastingAssist.erroneous_hint")))
    assert {"camera.content_failure", "camera.pixel_failure"} <= lits


def test_reduce_matches_truth_table_oracle():
    for seed in range(50):
        doc, top, literals = random_composition(seeded(seed))
        model = load_system(doc)
        got = cuts(minimal_cut_sets(reduce_scope(model, Scope.whole(model)), top))
        assert got == minimal_true_sets(evaluate_all(doc, top, literals), literals), seed


def test_classic_tree_cut_sets_agree():
    for seed in range(50):
        doc, top, _ = random_composition(seeded(seed))
        model = load_system(doc)
        a = cuts(fault_tree_cut_sets(to_classic_fault_tree(model, top)))
        b = cuts(minimal_cut_sets(reduce_scope(model, Scope.whole(model)), top))
        assert a == b


# ---------------------------------------------------------------------------
# probability


def test_probability_half():
    e = element([], [("b1", "top")])
    mca = minimal_cut_sets(e, "top")
    fit = 1e9 / 1000.0 * math.log(2)
    assert top_probability(mca, {"b1": fit}, 1000.0) == pytest.approx(0.5)


def test_probability_rare_event_sum():
    e = element([("g", "OR")], [("b1", "g"), ("b2", "g"), ("g", "top")])
    mca = minimal_cut_sets(e, "top")
    assert top_probability(mca, {}, 1.0, {"b1": 0.1, "b2": 0.1}) == pytest.approx(0.2)


def test_probability_errors():
    e = element([], [("b1", "top")])
    mca = minimal_cut_sets(e, "top")
    with pytest.raises(MissingRate):
        top_probability(mca, {}, 1.0)
    with pytest.raises(ValueError):
        top_probability(mca, {"b1": 1.0}, 0)


def _inclusion_exclusion(cut_sets, p):
    total = 0.0
    for k in range(1, len(cut_sets) + 1):
        for combo in itertools.combinations(cut_sets, k):
            events = set().union(*combo)
            total += (-1) ** (k + 1) * math.prod(p[x] for x in events)
    return total


@pytest.mark.parametrize("ofm", ["camera.omission_of_image", "camera.corrupted_image", "camera.sampling_deviation"])
def test_camera_probability_against_inclusion_exclusion(coasting, ofm):
    e = reduce_scope(coasting, Scope.of(coasting, ["camera"]))
    mca = minimal_cut_sets(e, ofm)
    assert len(mca.cuts) <= 3
    rates = model_rates(coasting)
    hours = 10_000.0
    p = {k: 1 - math.exp(-v * 1e-9 * hours) for k, v in rates.items()}
    exact = _inclusion_exclusion([set(c) for c in mca.as_sets()], p)
    approx = top_probability(mca, rates, hours)
    # rare-event sum is an upper bound that is tight for small probabilities
    assert approx >= exact - 1e-15
    assert approx == pytest.approx(exact, rel=1e-3)
