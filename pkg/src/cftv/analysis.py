"""Scope interfaces, scope reduction, minimal cut sets and top-event probability."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import EmptyScope, MissingRate, PropagationCycle, UnknownComponent, UnknownTop, UnsupportedGate
from .model import GATE_KINDS, CftElement, Edge, FailureMode, Gate, BasicEvent, qualify

LITERAL_KINDS = ("BASIC", "IFM", "EXTERNAL")


@dataclass(frozen=True)
class Scope:
    members: frozenset

    @classmethod
    def of(cls, model, members):
        members = frozenset(members)
        if not members:
            raise EmptyScope("scope has no members")
        unknown = sorted(m for m in members if not model.has_component(m))
        if unknown:
            raise UnknownComponent(f"unknown scope member(s): {', '.join(unknown)}")
        return cls(members)

    @classmethod
    def whole(cls, model):
        return cls.of(model, model.component_ids)

    @property
    def key(self):
        return "+".join(sorted(self.members))

    def __contains__(self, comp_id):
        return comp_id in self.members


@dataclass(frozen=True)
class ScopeEntry:
    component: str
    port: str
    mode: object  # FailureMode or BasicEvent

    @property
    def id(self):
        return qualify(self.component, self.mode.id)


@dataclass(frozen=True)
class ScopeInterface:
    input_failure_modes: tuple
    output_failure_modes: tuple
    basic_events: tuple

    def literal_ids(self):
        return sorted(e.id for e in self.input_failure_modes + self.basic_events)

    def ofm_ids(self):
        return [e.id for e in self.output_failure_modes]


@dataclass(frozen=True)
class CutSet:
    literals: tuple

    def __post_init__(self):
        if not self.literals:
            raise ValueError("cut set must not be empty")
        if len(set(self.literals)) != len(self.literals):
            raise ValueError("cut set repeats a literal")

    def __iter__(self):
        return iter(self.literals)

    def __len__(self):
        return len(self.literals)

    def as_set(self):
        return frozenset(self.literals)


@dataclass(frozen=True)
class McaResult:
    top: str
    cuts: tuple

    def as_sets(self):
        return [c.as_set() for c in self.cuts]

    def to_dict(self):
        return {"top": self.top, "cuts": [list(c.literals) for c in self.cuts]}


def _scope_of(model, scope):
    if isinstance(scope, Scope):
        Scope.of(model, scope.members)
        return scope
    return Scope.of(model, scope)


def scope_interface(model, scope):
    """IFM(S), OFM(S) and B(S) of a scope.

    IFMs on unconnected member inports and OFMs on unconnected member
    outports count as boundary modes: they are controllable/observable
    from outside.
    """
    scope = _scope_of(model, scope)
    ifms, ofms, bes = [], [], []
    for comp in model.components:
        if comp.id not in scope or comp.cft is None:
            continue
        e = comp.cft
        for f in e.ifms:
            conns = model.incoming(comp.id, f.port)
            if not conns or conns[0].src[0] not in scope:
                ifms.append(ScopeEntry(comp.id, f.port, f))
        for f in e.ofms:
            conns = model.outgoing(comp.id, f.port)
            if not conns or any(c.dst[0] not in scope for c in conns):
                ofms.append(ScopeEntry(comp.id, f.port, f))
        for b in e.basic_events:
            bes.append(ScopeEntry(comp.id, "", b))
    return ScopeInterface(tuple(ifms), tuple(ofms), tuple(bes))


def reduce_scope(model, scope):
    """Collapse the CFT elements of a scope into one element with qualified ids.

    IFMs fed from inside the scope are replaced by the expressions of the
    upstream OFMs they map to; OFMs not in OFM(S) disappear.
    """
    scope = _scope_of(model, scope)
    iface = scope_interface(model, scope)
    boundary_ifms = {e.id for e in iface.input_failure_modes}

    gates, edges = [], []
    seen_gates = set()
    resolving = []
    resolved = {}

    def source(cid, node_id):
        """Qualified node that an edge source (cid, node_id) stands for after splicing."""
        key = (cid, node_id)
        if key in resolved:
            return resolved[key]
        if key in resolving:
            raise PropagationCycle("propagation cycle inside scope: " + " -> ".join(qualify(*k) for k in resolving + [key]))
        resolving.append(key)
        e = model.component(cid).cft
        kind = e.kinds()[node_id]
        qid = qualify(cid, node_id)
        if kind == "OFM":
            out = source(cid, e.inputs()[node_id][0])
        elif kind == "IFM" and qid not in boundary_ifms:
            ups = model.ifm_sources(cid, e.ifm(node_id))
            srcs = [source(uc, name) for uc, name in ups]
            if len(srcs) == 1:
                out = srcs[0]
            else:
                gates.append(Gate(qid, "OR"))
                edges.extend(Edge(s, qid) for s in srcs)
                out = qid
        elif kind in GATE_KINDS:
            if qid not in seen_gates:
                seen_gates.add(qid)
                srcs = [source(cid, s) for s in e.inputs()[node_id]]
                gates.append(Gate(qid, kind))
                edges.extend(Edge(s, qid) for s in srcs)
            out = qid
        else:
            out = qid
        resolving.pop()
        resolved[key] = out
        return out

    ofms = []
    for entry in iface.output_failure_modes:
        e = model.component(entry.component).cft
        src = source(entry.component, e.inputs()[entry.mode.id][0])
        edges.append(Edge(src, entry.id))
        m = entry.mode
        ofms.append(FailureMode(entry.id, m.name, m.failure_class, qualify(entry.component, m.port)))

    used = {x.src for x in edges}
    ifms = tuple(
        FailureMode(en.id, en.mode.name, en.mode.failure_class, qualify(en.component, en.mode.port))
        for en in iface.input_failure_modes
        if en.id in used
    )
    bes = tuple(BasicEvent(en.id, en.mode.name, en.mode.fit) for en in iface.basic_events if en.id in used)
    return CftElement("scope:" + scope.key, ifms, tuple(ofms), bes, tuple(gates), tuple(edges))


# ---------------------------------------------------------------------------
# minimal cut sets


def _mocus(kinds, inputs, top):
    """Top-down MOCUS expansion followed by subsumption minimisation."""
    pending = [frozenset([top])]
    seen = set(pending)
    complete = set()
    while pending:
        row = pending.pop()
        expandable = sorted(n for n in row if kinds[n] not in LITERAL_KINDS)
        if not expandable:
            complete.add(row)
            continue
        node = expandable[0]
        kind = kinds[node]
        rest = row - {node}
        if kind == "OR":
            new_rows = [rest | {child} for child in inputs[node]]
        elif kind in ("AND", "OFM"):
            new_rows = [rest | set(inputs[node])]
        else:
            raise UnsupportedGate(f"cannot expand node {node!r} of kind {kind}")
        for r in new_rows:
            if r not in seen:
                seen.add(r)
                pending.append(r)
    return minimize(complete)


def minimize(families):
    """Drop every set that is a proper superset of another (absorption)."""
    kept = []
    for s in sorted({frozenset(f) for f in families}, key=lambda x: (len(x), sorted(x))):
        if not any(k <= s for k in kept):
            kept.append(s)
    return kept


def _result(top, sets):
    cuts = sorted(tuple(sorted(s)) for s in sets)
    return McaResult(top, tuple(CutSet(c) for c in cuts))


def minimal_cut_sets(element, top):
    """Minimal cut sets of OFM ``top`` of a CFT element (literals = IFMs and basic events)."""
    kinds = element.kinds()
    if kinds.get(top) != "OFM":
        raise UnknownTop(f"{top!r} is not an output failure mode of {element.component_id}")
    for g in element.gates:
        if g.kind not in GATE_KINDS:
            raise UnsupportedGate(g.kind)
    return _result(top, _mocus(kinds, element.inputs(), top))


def fault_tree_cut_sets(tree, top_label=None):
    """Minimal cut sets of a classic :class:`FaultTree`."""
    kinds = {n: v.kind for n, v in tree.nodes.items()}
    inputs = {n: list(v.children) for n, v in tree.nodes.items()}
    return _result(top_label or tree.top, _mocus(kinds, inputs, tree.top))


# ---------------------------------------------------------------------------
# quantitative


def event_probability(fit, mission_hours):
    """P(failure within the mission) for a constant rate given in FIT."""
    lam = fit * 1e-9
    return 1.0 - math.exp(-lam * mission_hours)


def top_probability(mca, rates, mission_time, ifm_probs=None):
    """Rare-event approximation: sum over cuts of the product of literal probabilities."""
    if not mission_time > 0:
        raise ValueError("mission time must be positive")
    ifm_probs = ifm_probs or {}
    total = 0.0
    for cut in mca.cuts:
        p = 1.0
        for lit in cut:
            if lit in rates and rates[lit] is not None:
                p *= event_probability(rates[lit], mission_time)
            elif lit in ifm_probs:
                p *= ifm_probs[lit]
            else:
                raise MissingRate(f"no rate or probability for {lit}")
        total += p
    return min(1.0, max(0.0, total))


def model_rates(model):
    """Qualified basic-event id -> FIT, for every basic event that has a rate."""
    out = {}
    for comp in model.components:
        if comp.cft is None:
            continue
        for b in comp.cft.basic_events:
            if b.fit is not None:
                out[qualify(comp.id, b.id)] = b.fit
    return out
