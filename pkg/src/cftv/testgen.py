"""Turn the minimal cut sets of a scope into executable test cases."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import Scope, minimal_cut_sets, reduce_scope, scope_interface
from .btm import BtmInstance, parse_btm, placeholders_in, substitute
from .errors import (
    ActionError,
    MissingBinding,
    SchemaError,
    UnboundPlaceholder,
    UnknownTemplate,
)
from .jsonio import canonical, content_hash, read_json
from .model import dump_system, load_system
from .monitors import FailureMonitor, parse_query
from .timeunits import parse_time

# ---------------------------------------------------------------------------
# bindings and the BTM library


@dataclass(frozen=True)
class TemplateChoice:
    template: str
    params: tuple  # sorted (key, value) pairs

    @property
    def param_dict(self):
        return dict(self.params)

    def to_dict(self):
        return {"template": self.template, "params": dict(self.params)}


@dataclass(frozen=True)
class BindingMap:
    """Literal id -> template choices; OFM id -> monitor declaration."""

    literals: dict = field(default_factory=dict)
    ofms: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise SchemaError("binding map must be an object")
        lits = {}
        for lit, spec in (doc.get("literals") or {}).items():
            if not isinstance(spec, dict) or not isinstance(spec.get("templates"), list) or not spec["templates"]:
                raise SchemaError(f"binding for {lit!r} needs a non-empty 'templates' list")
            base = {k: str(v) for k, v in (spec.get("params") or {}).items()}
            choices = []
            for entry in spec["templates"]:
                if isinstance(entry, str):
                    tid, extra = entry, {}
                elif isinstance(entry, dict) and isinstance(entry.get("template"), str):
                    tid, extra = entry["template"], entry.get("params") or {}
                else:
                    raise SchemaError(f"bad template entry for {lit!r}: {entry!r}")
                params = dict(base)
                params.update({k: str(v) for k, v in extra.items()})
                choices.append(TemplateChoice(tid, tuple(sorted(params.items()))))
            lits[lit] = tuple(choices)
        ofms = {}
        for ofm, spec in (doc.get("ofms") or {}).items():
            if not isinstance(spec, dict) or not isinstance(spec.get("signal"), str):
                raise SchemaError(f"monitor binding for {ofm!r} needs a 'signal'")
            ofms[ofm] = dict(spec)
        return cls(lits, ofms)

    def choices(self, literal):
        try:
            return self.literals[literal]
        except KeyError:
            raise MissingBinding(f"no BTM binding for literal {literal!r}") from None

    def monitor(self, ofm, expected="", role="target"):
        spec = self.ofms.get(ofm)
        if spec is None:
            raise MissingBinding(f"no monitor binding for output failure mode {ofm!r}")
        d = dict(spec)
        d.update({"ofm": ofm, "expected": expected, "role": role})
        return FailureMonitor.from_dict(d)


def load_library(directory):
    """Template id -> template document for every ``*.btm.json`` in a directory."""
    lib = {}
    for path in sorted(Path(directory).glob("*.btm.json")):
        doc = read_json(path)
        name = doc.get("name") if isinstance(doc, dict) else None
        if not isinstance(name, str):
            raise SchemaError(f"{path}: BTM template lacks a name")
        lib[name] = doc
    return lib


def _template(library, tid):
    try:
        return library[tid]
    except KeyError:
        raise UnknownTemplate(f"unknown BTM template {tid!r}") from None


def check_template(library, choice, deferred=("t_start",)):
    """Validate a template choice without simulation access; deferred placeholders may stay open."""
    doc = _template(library, choice.template)
    bound = substitute(doc, choice.param_dict)
    left = placeholders_in(bound) - set(deferred)
    if left:
        raise UnboundPlaceholder(f"template {choice.template!r}: unbound placeholder(s) {', '.join(sorted(left))}")
    probe = {k: "0" for k in placeholders_in(bound)}
    parse_btm(bound, probe)


def default_t_start(stop_time):
    return parse_time(stop_time) // 10


def instantiate_btm(literal, choice, library, defaults=None):
    params = dict(defaults or {})
    params.update(choice.param_dict)
    definition = parse_btm(_template(library, choice.template), params)
    return BtmInstance(definition, name=f"{literal}:{choice.template}", bindings=params)


def instantiate_btms(cut, bindings, library, defaults=None):
    """One instance per (literal, template) pair of a cut, placeholders bound."""
    out = []
    for lit in cut:
        for choice in bindings.choices(lit):
            out.append(instantiate_btm(lit, choice, library, defaults))
    return out


# ---------------------------------------------------------------------------
# test cases and suites


@dataclass(frozen=True)
class BtmBinding:
    literal: str
    template: str
    params: tuple

    @property
    def choice(self):
        return TemplateChoice(self.template, self.params)

    def to_dict(self):
        return {"literal": self.literal, "template": self.template, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["literal"], d["template"], tuple(sorted((k, str(v)) for k, v in d.get("params", {}).items())))


@dataclass(frozen=True)
class TestCase:
    id: str
    scope: tuple
    target: str
    cut: tuple
    btms: tuple
    monitors: tuple
    subsets: tuple = ()
    merged_cuts: tuple = ()

    __test__ = False  # not a pytest class

    @property
    def scope_key(self):
        return "+".join(self.scope)

    @property
    def templates(self):
        return tuple(b.template for b in self.btms)

    def target_monitor(self):
        return next(m for m in self.monitors if m.role == "target")

    def to_dict(self):
        return {
            "id": self.id,
            "scope": list(self.scope),
            "target": self.target,
            "cut": list(self.cut),
            "btms": [b.to_dict() for b in self.btms],
            "monitors": [m.to_dict() for m in self.monitors],
            "subsets": [list(s) for s in self.subsets],
            "merged_cuts": [list(c) for c in self.merged_cuts],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["id"],
            tuple(d["scope"]),
            d["target"],
            tuple(d["cut"]),
            tuple(BtmBinding.from_dict(b) for b in d["btms"]),
            tuple(FailureMonitor.from_dict(m) for m in d["monitors"]),
            tuple(tuple(s) for s in d.get("subsets", ())),
            tuple(tuple(c) for c in d.get("merged_cuts", ())),
        )


@dataclass(frozen=True)
class TestSuite:
    cases: tuple
    model: dict
    library: dict
    cross: bool = False

    __test__ = False

    @property
    def suite_id(self):
        return content_hash({"cases": [c.to_dict() for c in self.cases], "model": self.model, "library": self.library})[:16]

    def to_dict(self):
        return {
            "suite_id": self.suite_id,
            "cross": self.cross,
            "model_hash": content_hash(self.model),
            "model": self.model,
            "btm_library": self.library,
            "cases": [c.to_dict() for c in self.cases],
        }

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict) or "cases" not in doc:
            raise SchemaError("test suite document lacks 'cases'")
        try:
            cases = tuple(TestCase.from_dict(c) for c in doc["cases"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed test case: {exc}") from exc
        ids = [c.id for c in cases]
        if len(set(ids)) != len(ids):
            raise SchemaError("duplicate test case ids")
        return cls(cases, doc.get("model", {}), doc.get("btm_library", {}), bool(doc.get("cross", False)))

    def merged(self, other):
        """Concatenate two suites over the same model (ids stay unique)."""
        seen = {c.id for c in self.cases}
        extra = tuple(c for c in other.cases if c.id not in seen)
        lib = dict(self.library)
        lib.update(other.library)
        return TestSuite(self.cases + extra, self.model, lib, self.cross or other.cross)

    def coverage(self):
        """Multiset of (OFM, cut) pairs the suite exercises."""
        out = []
        for c in self.cases:
            out.append((c.target, c.cut))
            out.extend((c.target, m) for m in c.merged_cuts)
        return sorted(out)

    def signals(self):
        sigs = set()
        for c in self.cases:
            for m in c.monitors:
                sigs.add(m.signal)
                if m.query:
                    sigs |= parse_query(m.query).signals()
        return sorted(sigs)


def _case_id(scope_key, target, cut, templates):
    return f"{scope_key}|{target}|{'+'.join(cut)}|{'+'.join(templates)}"


def _as_model(model):
    if isinstance(model, dict):
        return load_system(model), model
    return model, dump_system(model)


def generate_test_cases(model, scope, bindings, library, cross=False):
    """One test case per (OFM of the scope, minimal cut, template combination)."""
    model, model_doc = _as_model(model)
    if not isinstance(bindings, BindingMap):
        bindings = BindingMap.from_dict(bindings)
    scope = scope if isinstance(scope, Scope) else Scope.of(model, scope)
    members = tuple(sorted(scope.members))
    iface = scope_interface(model, scope)
    element = reduce_scope(model, scope)
    ofms = [(e.id, e.mode.failure_class) for e in iface.output_failure_modes]
    families = {ofm: minimal_cut_sets(element, ofm) for ofm, _ in ofms}
    for ofm, cls in ofms:
        bindings.monitor(ofm, cls)  # MissingBinding early
    for mca in families.values():
        for cut in mca.cuts:
            for lit in cut:
                for choice in bindings.choices(lit):
                    check_template(library, choice)

    cases = []
    seen = {}
    used_templates = set()
    ids = set()
    for ofm, cls in ofms:
        for cut in families[ofm].cuts:
            lits = cut.literals
            combos = itertools.product(*[bindings.choices(lit) for lit in lits])
            for combo in combos:
                btms = tuple(BtmBinding(lit, ch.template, ch.params) for lit, ch in zip(lits, combo))
                monitors = [bindings.monitor(ofm, cls, "target")]
                injected = frozenset(lits)
                for other, ocls in ofms:
                    if other == ofm:
                        continue
                    if cross:
                        hit = any(c.as_set() <= injected for c in families[other].cuts)
                        role = "predicted" if hit else "unpredicted"
                    else:
                        role = "observe"
                    monitors.append(bindings.monitor(other, ocls, role))
                key = (ofm, frozenset((b.template, b.params) for b in btms))
                if key in seen:
                    idx = seen[key]
                    prev = cases[idx]
                    cases[idx] = TestCase(
                        prev.id, prev.scope, prev.target, prev.cut, prev.btms, prev.monitors, prev.subsets, prev.merged_cuts + (lits,)
                    )
                    continue
                subsets = tuple(tuple(x for x in lits if x != drop) for drop in lits) if len(lits) >= 2 else ()
                case_id = base_id = _case_id("+".join(members), ofm, lits, [b.template for b in btms])
                n = 1
                while case_id in ids:
                    # same templates with different parameters
                    n += 1
                    case_id = f"{base_id}#{n}"
                ids.add(case_id)
                tc = TestCase(
                    case_id,
                    members,
                    ofm,
                    lits,
                    btms,
                    tuple(monitors),
                    subsets,
                )
                seen[key] = len(cases)
                cases.append(tc)
                used_templates.update(b.template for b in btms)
    lib = {t: library[t] for t in sorted(used_templates)}
    return TestSuite(tuple(cases), model_doc, lib, cross)


def generate_cross_tests(model, scope, bindings, library):
    return generate_test_cases(model, scope, bindings, library, cross=True)


# ---------------------------------------------------------------------------
# dry-run validation


def dry_run(suite, config):
    """Diagnostics for BTM and monitor paths that do not resolve in ``config``."""
    from .sim import build_simulation

    problems = []
    sim = build_simulation(config)
    known = set(sim.injectables) | {f"{e.name}.{p}" for e in sim.entities.values() for p in e.outports}
    defaults = {"t_start": str(default_t_start(config.stop_time))}
    for tc in suite.cases:
        for b in tc.btms:
            try:
                inst = instantiate_btm(b.literal, b.choice, suite.library, defaults)
                inst.attach(sim)
            except (ActionError, UnboundPlaceholder, UnknownTemplate, SchemaError) as exc:
                problems.append({"case": tc.id, "literal": b.literal, "message": str(exc)})
        for m in tc.monitors:
            sigs = {m.signal} | (parse_query(m.query).signals() if m.query else set())
            for s in sorted(sigs - known):
                problems.append({"case": tc.id, "ofm": m.ofm, "message": f"monitored signal {s!r} does not exist"})
    # de-duplicate while keeping order
    out, seen = [], set()
    for p in problems:
        k = canonical(p)
        if k not in seen:
            seen.add(k)
            out.append(p)
    return out
