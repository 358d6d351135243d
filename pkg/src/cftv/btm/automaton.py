"""Behavioral threat models: timed automata that drive injectors."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import (
    ActionError,
    CftvError,
    ExprTypeError,
    SchemaError,
    UnboundPlaceholder,
)
from ..sim.kernel import parse_path
from .expr import evaluate, names_used, parse_actions, parse_guard, walk

PLACEHOLDER = re.compile(r"\$\{(\w+)\}")
KNOWN_PLACEHOLDERS = ("target", "value", "t_start", "period")


@dataclass(frozen=True)
class Transition:
    src: str
    tgt: str
    guard: str
    actions: tuple  # source strings
    guard_ast: tuple = field(compare=False, repr=False, default=("lit", True))
    action_ast: tuple = field(compare=False, repr=False, default=())

    @property
    def emits(self):
        return tuple(a[1] for a in self.action_ast if a[0] == "emit")

    def to_dict(self):
        return {"src": self.src, "tgt": self.tgt, "guard": self.guard, "actions": list(self.actions)}


@dataclass(frozen=True)
class BtmDefinition:
    name: str
    states: tuple  # ((name, initial), ...)
    transitions: tuple
    clocks: tuple = ()
    locals: dict = field(default_factory=dict)
    events_in: tuple = ()
    events_out: tuple = ()

    @property
    def initial(self):
        return next(n for n, init in self.states if init)

    @property
    def location_names(self):
        return [n for n, _ in self.states]

    def paths(self):
        """Every injector path mentioned in guards or actions."""
        out = []
        for t in self.transitions:
            out.extend(n[1] for n in walk(t.guard_ast) if n[0] == "var")
            for a in t.action_ast:
                if a[0] in ("force", "release"):
                    out.append(a[1])
                if a[0] in ("force", "set"):
                    out.extend(n[1] for n in walk(a[2]) if n[0] == "var")
        return list(dict.fromkeys(out))

    def guard_paths(self):
        return {parse_path(n[1])[0] for t in self.transitions for n in walk(t.guard_ast) if n[0] == "var"}

    def to_dict(self):
        return {
            "name": self.name,
            "clocks": list(self.clocks),
            "locals": dict(self.locals),
            "events": {"in": list(self.events_in), "out": list(self.events_out)},
            "states": [{"name": n, "initial": i} for n, i in self.states],
            "transitions": [t.to_dict() for t in self.transitions],
        }


def _require(doc, key, kind, default=None):
    if key not in doc:
        if default is not None:
            return default
        raise SchemaError(f"BTM document lacks {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise SchemaError(f"BTM field {key!r} has the wrong type")
    return value


def placeholders_in(doc):
    """Placeholder names referenced anywhere in a BTM document's strings."""
    found = set()

    def scan(x):
        if isinstance(x, str):
            found.update(PLACEHOLDER.findall(x))
        elif isinstance(x, dict):
            for k, v in x.items():
                scan(k)
                scan(v)
        elif isinstance(x, list):
            for v in x:
                scan(v)

    scan({k: v for k, v in doc.items() if k != "placeholders"})
    return found


def substitute(doc, bindings):
    """Replace ``${name}`` textually in every string of a document."""

    def sub(x):
        if isinstance(x, str):
            return PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]) if m.group(1) in bindings else m.group(0), x)
        if isinstance(x, dict):
            return {k: sub(v) for k, v in x.items()}
        if isinstance(x, list):
            return [sub(v) for v in x]
        return x

    out = sub({k: v for k, v in doc.items() if k != "placeholders"})
    return out


def parse_btm(document, bindings=None):
    """Validate a ``.btm.json`` document (optionally a template plus bindings)."""
    if not isinstance(document, dict):
        raise SchemaError("BTM document must be an object")
    if bindings:
        document = substitute(document, bindings)
    unbound = placeholders_in(document)
    if unbound:
        raise UnboundPlaceholder(f"unbound placeholder(s): {', '.join(sorted(unbound))}")

    name = _require(document, "name", str)
    clocks = tuple(_require(document, "clocks", list, []))
    locals_ = dict(_require(document, "locals", dict, {}))
    events = _require(document, "events", dict, {})
    ev_in = tuple(events.get("in", ()))
    ev_out = tuple(events.get("out", ()))
    raw_states = _require(document, "states", list)
    states = []
    for s in raw_states:
        if not isinstance(s, dict) or not isinstance(s.get("name"), str):
            raise SchemaError("each state needs a string name")
        states.append((s["name"], bool(s.get("initial", False))))
    names = [n for n, _ in states]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate state names")
    if sum(1 for _, i in states if i) != 1:
        raise SchemaError("a BTM needs exactly one initial state")

    transitions = []
    for t in _require(document, "transitions", list, []):
        if not isinstance(t, dict):
            raise SchemaError("transition must be an object")
        src, tgt = t.get("src"), t.get("tgt")
        if src not in names or tgt not in names:
            raise SchemaError(f"transition {src!r}->{tgt!r} references an unknown state")
        guard = t.get("guard", "") or ""
        acts = t.get("actions", [])
        if isinstance(acts, str):
            acts = [acts]
        if not isinstance(guard, str) or not isinstance(acts, list):
            raise SchemaError("guard must be a string and actions a list of strings")
        g_ast = parse_guard(guard)
        a_ast = tuple(a for text in acts for a in parse_actions(text))
        transitions.append(Transition(src, tgt, guard, tuple(acts), g_ast, a_ast))

    defn = BtmDefinition(name, tuple(states), tuple(transitions), clocks, locals_, ev_in, ev_out)
    _type_check(defn)
    return defn


def _static_kind(node):
    if node[0] == "lit":
        v = node[1]
        if v is None:
            return "null"
        if isinstance(v, bool):
            return "bool"
        if isinstance(v, str):
            return "str"
        return "num"
    if node[0] in ("clock", "arith", "neg"):
        return "num"
    if node[0] in ("not", "and", "or", "cmp", "event"):
        return "bool"
    return "any"


def _check_expr(node, defn):
    for n in walk(node):
        if n[0] == "clock" and n[1] not in defn.clocks:
            raise ExprTypeError(f"undeclared clock {n[1]!r}")
        if n[0] == "local" and n[1] not in defn.locals:
            raise ExprTypeError(f"undeclared local {n[1]!r}")
        if n[0] == "event" and n[1] not in defn.events_in:
            raise ExprTypeError(f"event {n[1]!r} is not subscribed")
        if n[0] == "cmp" and n[1] in ("<", "<=", ">", ">="):
            for side in n[2:]:
                if _static_kind(side) in ("str", "null", "bool"):
                    raise ExprTypeError(f"ordering comparison on a non-number in {n!r}")
        if n[0] in ("arith", "neg"):
            for side in n[1:]:
                if isinstance(side, tuple) and _static_kind(side) in ("str", "null", "bool"):
                    raise ExprTypeError("arithmetic on a non-number")
        if n[0] == "var":
            parse_path(n[1])


def _type_check(defn):
    for t in defn.transitions:
        _check_expr(t.guard_ast, defn)
        for a in t.action_ast:
            verb = a[0]
            if verb in ("force", "release"):
                parse_path(a[1])
            if verb in ("force", "set"):
                _check_expr(a[2], defn)
            if verb == "set" and a[1] not in defn.locals:
                raise ExprTypeError(f"set of undeclared local {a[1]!r}")
            if verb == "reset" and a[1] not in defn.clocks:
                raise ExprTypeError(f"reset of undeclared clock {a[1]!r}")
            if verb == "emit" and a[1] not in defn.events_out:
                raise ExprTypeError(f"event {a[1]!r} is not declared as emitted")


class BtmInstance:
    """One running copy of a :class:`BtmDefinition` inside a simulation."""

    def __init__(self, definition, name=None, bindings=None):
        self.definition = definition
        self.name = name or definition.name
        self.bindings = dict(bindings or {})
        self.location = definition.initial
        self.resets = {c: 0 for c in definition.clocks}
        self.store = dict(definition.locals)
        self.pending = set()
        self.world = None
        self.now = 0
        self._by_src = {}
        for t in definition.transitions:
            self._by_src.setdefault(t.src, []).append(t)

    # -- kernel contract ----------------------------------------------------
    @property
    def location_count(self):
        return len(self.definition.states)

    @property
    def referenced_paths(self):
        return self.definition.guard_paths()

    def attach(self, world):
        self.world = world
        self.now = getattr(world, "now", 0)
        self.resets = {c: self.now for c in self.definition.clocks}
        for p in self.definition.paths():
            if not world.has_path(p):
                try:
                    world.read_signal(p)
                except CftvError:
                    raise ActionError(f"{self.name}: no injector at {p!r}") from None

    def offer_event(self, event):
        if event in self.definition.events_in:
            self.pending.add(event)

    def clear_events(self):
        self.pending.clear()

    # -- evaluation environment --------------------------------------------
    def clock(self, name):
        return self.now - self.resets[name]

    def var(self, path):
        try:
            return self.world.read_signal(path)
        except CftvError as exc:
            raise ActionError(f"{self.name}: cannot read {path!r}: {exc}") from exc

    def local(self, name):
        return self.store[name]

    def event(self, name):
        return name in self.pending

    def enabled(self, t):
        try:
            return bool(evaluate(t.guard_ast, self))
        except ExprTypeError as exc:
            raise ActionError(f"{self.name}: guard {t.guard!r}: {exc}") from exc

    def evaluate(self, world, now):
        """Fire the first enabled transition (document order) from the current location."""
        self.world = world
        self.now = now
        for t in self._by_src.get(self.location, ()):
            if self.enabled(t):
                self.pending -= names_used(t.guard_ast, "event")
                self._apply(t)
                self.location = t.tgt
                return t
        return None

    def _apply(self, t):
        for a in t.action_ast:
            verb = a[0]
            try:
                if verb == "force":
                    self.world.force(a[1], evaluate(a[2], self))
                elif verb == "release":
                    self.world.release(a[1])
                elif verb == "set":
                    self.store[a[1]] = evaluate(a[2], self)
                elif verb == "reset":
                    self.resets[a[1]] = self.now
                elif verb == "emit":
                    self.world.emit(a[1], self.name)
            except ActionError:
                raise
            except (CftvError, ValueError, TypeError) as exc:
                raise ActionError(f"{self.name}: {verb}({a[1]}) failed: {exc}") from exc

    def next_wakeup(self, now):
        """Earliest future time at which a clock comparison from here could hold."""
        best = None
        for t in self._by_src.get(self.location, ()):
            for n in walk(t.guard_ast):
                cand = self._clock_deadline(n, now)
                if cand is not None and cand > now and (best is None or cand < best):
                    best = cand
        return best

    def _clock_deadline(self, n, now):
        if n[0] != "cmp":
            return None
        op, a, b = n[1], n[2], n[3]
        if b[0] == "clock" and a[0] == "lit":
            a, b = b, a
            op = {"<": ">", "<=": ">=", ">": "<", ">=": "<="}.get(op, op)
        if a[0] != "clock" or b[0] != "lit" or isinstance(b[1], bool) or not isinstance(b[1], (int, float)):
            return None
        base = self.resets[a[1]]
        k = b[1]
        if op in ("==", ">="):
            t = base + k
        elif op == ">":
            t = base + (int(k) + 1 if float(k).is_integer() else k)
        else:
            return None
        t = int(t) if float(t).is_integer() else int(t) + 1
        return t if t > now else None


def load_btm(document, bindings=None, name=None):
    """Parse and wrap in an instance in one step."""
    return BtmInstance(parse_btm(document, bindings), name=name, bindings=bindings)
