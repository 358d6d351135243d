"""Component fault tree models: architecture, per-component failure logic, validation.

A model is a set of components with in/out ports and directed connections.
Each component may carry a CFT element: input failure modes (IFMs) on its
inports, output failure modes (OFMs) on its outports, basic events and
AND/OR gates wired by edges.  An IFM on a connected inport stands for the
upstream OFMs it ``maps`` to (by default the upstream OFM with the same id).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .errors import DanglingReference, DuplicateId, PropagationCycle, SchemaError, UnknownTop, UnsupportedGate

FAILURE_CLASSES = ("content", "early", "late", "halt", "erratic")
GATE_KINDS = ("AND", "OR")

_ID_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*$")


def qualify(component_id, node_id):
    return f"{component_id}.{node_id}"


def split_ref(ref):
    """``"camera.image"`` -> ``("camera", "image")``."""
    if not isinstance(ref, str) or ref.count(".") != 1:
        raise SchemaError(f"expected 'component.name', got {ref!r}")
    comp, name = ref.split(".")
    return comp, name


@dataclass(frozen=True)
class FailureMode:
    id: str
    name: str
    failure_class: str
    port: str
    maps: tuple = ()  # IFM only: upstream OFM ids; empty means "same id"

    @property
    def is_custom(self):
        return self.failure_class.startswith("custom:")


@dataclass(frozen=True)
class BasicEvent:
    id: str
    name: str
    fit: Optional[float] = None


@dataclass(frozen=True)
class Gate:
    id: str
    kind: str


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str


@dataclass(frozen=True)
class CftElement:
    component_id: str
    ifms: tuple = ()
    ofms: tuple = ()
    basic_events: tuple = ()
    gates: tuple = ()
    edges: tuple = ()

    def kinds(self):
        """Map every node id to one of IFM, OFM, BASIC, AND, OR."""
        out = {}
        for f in self.ifms:
            out[f.id] = "IFM"
        for f in self.ofms:
            out[f.id] = "OFM"
        for b in self.basic_events:
            out[b.id] = "BASIC"
        for g in self.gates:
            out[g.id] = g.kind
        return out

    def inputs(self):
        """Incoming edge sources per node, in document order."""
        ins = {node: [] for node in self.kinds()}
        for e in self.edges:
            ins.setdefault(e.dst, []).append(e.src)
        return ins

    def ofm(self, ofm_id):
        for f in self.ofms:
            if f.id == ofm_id:
                return f
        raise UnknownTop(f"{self.component_id} has no output failure mode {ofm_id!r}")

    def ifm(self, ifm_id):
        for f in self.ifms:
            if f.id == ifm_id:
                return f
        raise KeyError(ifm_id)


@dataclass(frozen=True)
class Component:
    id: str
    inports: tuple = ()
    outports: tuple = ()
    cft: Optional[CftElement] = None


@dataclass(frozen=True)
class Connection:
    src: tuple  # (component id, outport id)
    dst: tuple  # (component id, inport id)


@dataclass(frozen=True)
class SystemModel:
    components: tuple = ()
    connections: tuple = ()
    _index: dict = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {c.id: c for c in self.components})

    def component(self, comp_id):
        try:
            return self._index[comp_id]
        except KeyError:
            raise DanglingReference(f"unknown component {comp_id!r}") from None

    def has_component(self, comp_id):
        return comp_id in self._index

    @property
    def component_ids(self):
        return [c.id for c in self.components]

    def incoming(self, comp_id, inport):
        """Connections feeding an inport (a valid model has at most one)."""
        return [c for c in self.connections if c.dst == (comp_id, inport)]

    def outgoing(self, comp_id, outport):
        return [c for c in self.connections if c.src == (comp_id, outport)]

    def find_ofm(self, ref):
        comp_id, ofm_id = split_ref(ref)
        if not self.has_component(comp_id):
            raise UnknownTop(f"unknown component in {ref!r}")
        comp = self.component(comp_id)
        if comp.cft is None:
            raise UnknownTop(f"component {comp_id!r} has no CFT element")
        return comp.cft.ofm(ofm_id)

    def ifm_sources(self, comp_id, ifm):
        """Upstream ``(component, ofm id)`` pairs an IFM stands for; [] if unconnected."""
        conns = self.incoming(comp_id, ifm.port)
        if not conns:
            return []
        up_comp, up_port = conns[0].src
        names = ifm.maps or (ifm.id,)
        return [(up_comp, name) for name in names]


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    location: str
    severity: str = "error"

    def to_dict(self):
        return {"code": self.code, "message": self.message, "location": self.location, "severity": self.severity}


# ---------------------------------------------------------------------------
# loading / saving


def _require(obj, key, where, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{where}: missing key {key!r}")
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise SchemaError(f"{where}.{key}: expected {kind.__name__}")
    return value


def _check_id(value, where):
    if not isinstance(value, str) or not _ID_RE.match(value):
        raise SchemaError(f"{where}: invalid identifier {value!r}")
    return value


def _failure_class(raw, where):
    if not isinstance(raw, str):
        raise SchemaError(f"{where}: failure class must be a string")
    if raw in FAILURE_CLASSES:
        return raw
    m = re.match(r"^custom\((.+)\)$", raw) or re.match(r"^custom:(.+)$", raw)
    if m:
        return f"custom:{m.group(1)}"
    raise SchemaError(f"{where}: unknown failure class {raw!r}")


def _load_fit(raw, where):
    if "fit" in raw and "mtbf_hours" in raw:
        raise SchemaError(f"{where}: give either fit or mtbf_hours, not both")
    if "mtbf_hours" in raw:
        mtbf = raw["mtbf_hours"]
        if not isinstance(mtbf, (int, float)) or isinstance(mtbf, bool) or not mtbf > 0:
            raise SchemaError(f"{where}: mtbf_hours must be a positive number")
        return 1e9 / float(mtbf)
    fit = raw.get("fit")
    if fit is None:
        return None
    if not isinstance(fit, (int, float)) or isinstance(fit, bool):
        raise SchemaError(f"{where}: fit must be a number")
    fit = float(fit)
    if not (fit > 0 and fit != float("inf")):
        raise SchemaError(f"{where}: fit must be positive and finite")
    return fit


def _load_cft(comp_id, raw, inports, outports):
    where = f"components[{comp_id}].cft"
    if not isinstance(raw, dict):
        raise SchemaError(f"{where}: expected object")
    seen = set()

    def claim(node_id, w):
        _check_id(node_id, w)
        if node_id in seen:
            raise DuplicateId(f"{w}: duplicate node id {node_id!r}")
        seen.add(node_id)
        return node_id

    def modes(key, ports):
        out = []
        for i, fm in enumerate(raw.get(key, [])):
            w = f"{where}.{key}[{i}]"
            fid = claim(_require(fm, "id", w), w)
            port = _require(fm, "port", w, str)
            if port not in ports:
                raise DanglingReference(f"{w}: port {port!r} not on {comp_id}")
            maps = fm.get("maps", [])
            if key == "ofms" and maps:
                raise SchemaError(f"{w}: 'maps' is only valid on input failure modes")
            if not isinstance(maps, list) or not all(isinstance(x, str) for x in maps):
                raise SchemaError(f"{w}.maps: expected list of ids")
            out.append(FailureMode(fid, fm.get("name", fid), _failure_class(_require(fm, "class", w), w), port, tuple(maps)))
        return tuple(out)

    ifms = modes("ifms", inports)
    ofms = modes("ofms", outports)
    bes = []
    for i, be in enumerate(raw.get("basic_events", [])):
        w = f"{where}.basic_events[{i}]"
        bid = claim(_require(be, "id", w), w)
        bes.append(BasicEvent(bid, be.get("name", bid), _load_fit(be, w)))
    gates = []
    for i, g in enumerate(raw.get("gates", [])):
        w = f"{where}.gates[{i}]"
        gid = claim(_require(g, "id", w), w)
        kind = str(_require(g, "kind", w)).upper()
        if kind not in GATE_KINDS:
            raise UnsupportedGate(f"{w}: gate kind {kind!r} (only AND/OR are supported)")
        gates.append(Gate(gid, kind))
    edges = []
    for i, e in enumerate(raw.get("edges", [])):
        w = f"{where}.edges[{i}]"
        src, dst = _require(e, "src", w, str), _require(e, "dst", w, str)
        for end in (src, dst):
            if end not in seen:
                raise DanglingReference(f"{w}: unknown node {end!r}")
        edges.append(Edge(src, dst))
    return CftElement(comp_id, ifms, ofms, tuple(bes), tuple(gates), tuple(edges))


def load_system(doc):
    """Build a linked :class:`SystemModel` from a ``.cft.json`` document."""
    if not isinstance(doc, dict):
        raise SchemaError("model document must be a JSON object")
    comps_raw = doc.get("components", [])
    conns_raw = doc.get("connections", [])
    if not isinstance(comps_raw, list) or not isinstance(conns_raw, list):
        raise SchemaError("'components' and 'connections' must be lists")
    components = []
    ids = set()
    for i, raw in enumerate(comps_raw):
        w = f"components[{i}]"
        cid = _check_id(_require(raw, "id", w), w)
        if cid in ids:
            raise DuplicateId(f"duplicate component id {cid!r}")
        ids.add(cid)
        inports = tuple(raw.get("inports", []))
        outports = tuple(raw.get("outports", []))
        ports = [_check_id(p, f"{w}.ports") for p in inports + outports]
        if len(set(ports)) != len(ports):
            raise DuplicateId(f"{w}: duplicate port id on {cid}")
        cft = _load_cft(cid, raw["cft"], inports, outports) if raw.get("cft") is not None else None
        components.append(Component(cid, inports, outports, cft))
    index = {c.id: c for c in components}
    connections = []
    for i, raw in enumerate(conns_raw):
        w = f"connections[{i}]"
        src = split_ref(_require(raw, "from", w, str))
        dst = split_ref(_require(raw, "to", w, str))
        if src[0] not in index or src[1] not in index[src[0]].outports:
            raise DanglingReference(f"{w}: no outport {'.'.join(src)!r}")
        if dst[0] not in index or dst[1] not in index[dst[0]].inports:
            raise DanglingReference(f"{w}: no inport {'.'.join(dst)!r}")
        connections.append(Connection(src, dst))
    return SystemModel(tuple(components), tuple(connections))


def dump_system(model):
    """Inverse of :func:`load_system` (FIT is the canonical rate unit)."""

    def fm(f, with_maps):
        d = {"id": f.id, "name": f.name, "class": f.failure_class, "port": f.port}
        if with_maps and f.maps:
            d["maps"] = list(f.maps)
        return d

    comps = []
    for c in model.components:
        d = {"id": c.id, "inports": list(c.inports), "outports": list(c.outports)}
        if c.cft is not None:
            e = c.cft
            bes = []
            for b in e.basic_events:
                bd = {"id": b.id, "name": b.name}
                if b.fit is not None:
                    bd["fit"] = b.fit
                bes.append(bd)
            d["cft"] = {
                "ifms": [fm(f, True) for f in e.ifms],
                "ofms": [fm(f, False) for f in e.ofms],
                "basic_events": bes,
                "gates": [{"id": g.id, "kind": g.kind} for g in e.gates],
                "edges": [{"src": x.src, "dst": x.dst} for x in e.edges],
            }
        comps.append(d)
    conns = [{"from": ".".join(c.src), "to": ".".join(c.dst)} for c in model.connections]
    return {"components": comps, "connections": conns}


# ---------------------------------------------------------------------------
# validation


def _element_cycles(element):
    ins = element.inputs()
    state = {}
    found = []

    def visit(node, stack):
        state[node] = 1
        stack.append(node)
        for src in ins.get(node, []):
            if state.get(src) == 1:
                found.append(stack[stack.index(src):] + [src])
            elif src not in state:
                visit(src, stack)
        stack.pop()
        state[node] = 2

    for node in sorted(ins):
        if node not in state:
            visit(node, [])
    return found


def validate(model):
    """Check every structural invariant; returns a list of :class:`Diagnostic`."""
    diags = []
    fed = {}
    for conn in model.connections:
        loc = f"{'.'.join(conn.src)}->{'.'.join(conn.dst)}"
        if conn.src[0] == conn.dst[0]:
            diags.append(Diagnostic("self-connection", "connection joins two ports of the same component", loc))
        fed.setdefault(conn.dst, []).append(conn)
    for dst, conns in sorted(fed.items()):
        if len(conns) > 1:
            diags.append(Diagnostic("fan-in", f"inport has {len(conns)} incoming connections", ".".join(dst)))

    for comp in model.components:
        e = comp.cft
        if e is None:
            continue
        kinds = e.kinds()
        ins = e.inputs()
        for edge in e.edges:
            loc = f"{comp.id}:{edge.src}->{edge.dst}"
            if kinds[edge.src] == "OFM":
                diags.append(Diagnostic("edge-direction", "output failure mode used as edge source", loc))
            if kinds[edge.dst] in ("IFM", "BASIC"):
                diags.append(Diagnostic("edge-direction", "edge enters an input failure mode or basic event", loc))
        for cyc in _element_cycles(e):
            diags.append(Diagnostic("cycle", "cycle in CFT element: " + " -> ".join(cyc), comp.id))
        for g in e.gates:
            n = len(ins.get(g.id, []))
            if g.kind == "AND" and n < 2:
                diags.append(Diagnostic("and-arity", f"AND gate arity < 2 ({n})", f"{comp.id}.{g.id}"))
            elif n < 1:
                diags.append(Diagnostic("gate-arity", "gate has no inputs", f"{comp.id}.{g.id}"))
        for f in e.ofms:
            n = len(ins.get(f.id, []))
            if n != 1:
                diags.append(Diagnostic("ofm-edges", f"output failure mode has {n} incoming edges (needs exactly 1)", f"{comp.id}.{f.id}"))
        for f in e.ifms:
            conns = model.incoming(comp.id, f.port)
            if not conns:
                continue
            up_comp, up_port = conns[0].src
            up = model.component(up_comp).cft
            names = f.maps or (f.id,)
            for name in names:
                ok = up is not None and any(o.id == name and o.port == up_port for o in up.ofms)
                if not ok:
                    diags.append(
                        Diagnostic("ifm-unmapped", f"maps to {up_comp}.{name}, which is not an output failure mode on {up_comp}.{up_port}", f"{comp.id}.{f.id}")
                    )
    diags.extend(_propagation_cycles(model))
    return diags


def _propagation_cycles(model):
    """Cycles through IFM->OFM substitution that span more than one component."""
    succ = {}
    for comp in model.components:
        e = comp.cft
        if e is None:
            continue
        for edge in e.edges:
            succ.setdefault(qualify(comp.id, edge.src), []).append(qualify(comp.id, edge.dst))
        for f in e.ifms:
            for up_comp, name in model.ifm_sources(comp.id, f):
                succ.setdefault(qualify(up_comp, name), []).append(qualify(comp.id, f.id))
    diags = []
    for scc in _strongly_connected(succ):
        owners = {n.split(".")[0] for n in scc}
        if len(scc) > 1 and len(owners) > 1:
            diags.append(Diagnostic("propagation-cycle", "failure propagation loops through " + ", ".join(sorted(scc)), sorted(scc)[0]))
    return diags


def _strongly_connected(succ):
    index, low, on_stack, stack, out = {}, {}, set(), [], []
    counter = [0]

    def strong(v):
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        for w in succ.get(v, []):
            if w not in index:
                strong(w)
                low[v] = min(low[v], low[w])
            elif w in on_stack:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                on_stack.discard(w)
                comp.append(w)
                if w == v:
                    break
            out.append(comp)

    for v in sorted(succ):
        if v not in index:
            strong(v)
    return out


# ---------------------------------------------------------------------------
# classic fault tree


@dataclass(frozen=True)
class FtNode:
    kind: str  # AND | OR | BASIC | EXTERNAL
    children: tuple = ()


@dataclass(frozen=True)
class FaultTree:
    top: str
    nodes: dict

    def leaves(self):
        return sorted(n for n, v in self.nodes.items() if v.kind in ("BASIC", "EXTERNAL"))

    def evaluate(self, true_leaves):
        memo = {}

        def ev(n):
            if n not in memo:
                node = self.nodes[n]
                if node.kind in ("BASIC", "EXTERNAL"):
                    memo[n] = n in true_leaves
                elif node.kind == "AND":
                    memo[n] = all(ev(c) for c in node.children)
                else:
                    memo[n] = any(ev(c) for c in node.children)
            return memo[n]

        return ev(self.top)


def to_classic_fault_tree(model, top):
    """Splice out IFM/OFM pass-through nodes below ``top`` (``"comp.ofm"``).

    Leaves are basic events plus IFMs of unconnected inports (kind EXTERNAL).
    An IFM mapping to several upstream OFMs becomes an OR node under its own id.
    """
    comp_id, ofm_id = split_ref(top)
    model.find_ofm(top)
    nodes = {}
    resolved = {}

    def resolve(cid, node_id, stack):
        key = (cid, node_id)
        if key in resolved:
            return resolved[key]
        if key in stack:
            raise PropagationCycle("propagation cycle: " + " -> ".join(qualify(*k) for k in stack + [key]))
        stack = stack + [key]
        comp = model.component(cid)
        e = comp.cft
        if e is None:
            raise DanglingReference(f"component {cid!r} has no CFT element")
        kind = e.kinds().get(node_id)
        qid = qualify(cid, node_id)
        if kind is None:
            raise DanglingReference(f"unknown node {qid}")
        if kind == "BASIC":
            nodes[qid] = FtNode("BASIC")
            out = qid
        elif kind in GATE_KINDS:
            kids = tuple(resolve(cid, src, stack) for src in e.inputs()[node_id])
            nodes[qid] = FtNode(kind, kids)
            out = qid
        elif kind == "OFM":
            srcs = e.inputs()[node_id]
            if len(srcs) != 1:
                raise SchemaError(f"{qid}: output failure mode needs exactly one incoming edge")
            out = resolve(cid, srcs[0], stack)
        else:  # IFM
            ups = model.ifm_sources(cid, e.ifm(node_id))
            if not ups:
                nodes[qid] = FtNode("EXTERNAL")
                out = qid
            else:
                kids = tuple(resolve(uc, name, stack) for uc, name in ups)
                if len(kids) == 1:
                    out = kids[0]
                else:
                    nodes[qid] = FtNode("OR", kids)
                    out = qid
        resolved[key] = out
        return out

    root = resolve(comp_id, ofm_id, [])
    return FaultTree(root, nodes)
