"""Run reference and injection simulations, apply the oracle, build the report."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ActionError, EntityFault, UnboundPlaceholder, UnknownTemplate
from .jsonio import content_hash, write_atomic
from .model import load_system, qualify
from .monitors import monitor_verdict
from .sim import SimulationConfig, Trace, build_simulation
from .testgen import TestCase, TestSuite, default_t_start, instantiate_btm

OUTCOMES = ("Confirmed", "NotReproduced", "MaskedSubsetEffect", "InjectionError")
# strongest first
OUTCOME_PRECEDENCE = ("InjectionError", "MaskedSubsetEffect", "NotReproduced", "Confirmed")


# ---------------------------------------------------------------------------
# reference runs


class ReferenceCache:
    """Reference traces keyed by config hash; optionally mirrored to a directory."""

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory else None
        self.memory = {}
        self.hits = 0
        self.misses = 0

    @classmethod
    def from_env(cls):
        return cls(os.environ.get("CFTV_CACHE_DIR") or None)

    def _path(self, key):
        return self.directory / f"{key}.trace.jsonl"

    def get(self, key):
        if key in self.memory:
            self.hits += 1
            return self.memory[key]
        if self.directory is not None and self._path(key).exists():
            trace = Trace.from_jsonl(self._path(key).read_text(encoding="utf-8"))
            self.memory[key] = trace
            self.hits += 1
            return trace
        self.misses += 1
        return None

    def put(self, key, trace):
        self.memory[key] = trace
        if self.directory is not None:
            write_atomic(self._path(key), trace.to_jsonl())


def run_reference(config, cache=None):
    """Injection-free run of ``config``, served from ``cache`` when possible."""
    key = config.config_hash()
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    trace = build_simulation(config).run_until(config.stop_time)
    # canonical JSON form so cached and fresh traces compare alike
    trace = Trace.from_jsonl(trace.to_jsonl())
    if cache is not None:
        cache.put(key, trace)
    return trace


def suite_config(config, suite):
    """The run configuration for a suite: trace only what the monitors need."""
    return replace(config, trace=tuple(suite.signals()))


# ---------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class Finding:
    """An injection -> effect relation seen in simulation but absent from the CFT."""

    cause: tuple
    ofm: str
    failure_class: str
    test_id: str

    def to_dict(self):
        return {"cause": list(self.cause), "ofm": self.ofm, "class": self.failure_class, "test": self.test_id}


@dataclass(frozen=True)
class Verdict:
    test_id: str
    outcome: str
    scope: tuple = ()
    target: str = ""
    cut: tuple = ()
    templates: tuple = ()
    monitors: tuple = ()  # MonitorResult.to_dict() of the full-cut run
    subset_runs: tuple = ()
    findings: tuple = ()
    warnings: tuple = ()
    evidence: dict = field(default_factory=dict)
    message: str = ""

    def to_dict(self):
        return {
            "id": self.test_id,
            "outcome": self.outcome,
            "scope": list(self.scope),
            "target": self.target,
            "cut": list(self.cut),
            "templates": list(self.templates),
            "monitors": list(self.monitors),
            "subset_runs": list(self.subset_runs),
            "unmodeled_paths": [f.to_dict() for f in self.findings],
            "warnings": list(self.warnings),
            "evidence": self.evidence,
            "message": self.message,
        }


def _run_injected(tc, literals, config, library):
    sim = build_simulation(config)
    defaults = {"t_start": str(default_t_start(config.stop_time))}
    for b in tc.btms:
        if b.literal in literals:
            sim.add_btm(instantiate_btm(b.literal, b.choice, library, defaults))
    trace = sim.run_until(config.stop_time)
    return Trace.from_jsonl(trace.to_jsonl()), sim.injection_log


def _dt_summary(result):
    dts = [e.dt for e in result.classification.evidence if e.dt is not None]
    if not dts:
        return None
    return {"min_ps": min(dts), "max_ps": max(dts)}


def _observed_class(result):
    for c in ("halt", "late", "early", "content", "erratic"):
        if c in result.triggered_classes:
            return c
    return "query"


def _same_observation(a, b):
    keys = ("signal", "eps", "window", "comparator", "query")
    return all(getattr(a, k) == getattr(b, k) for k in keys)


def _explained(result, results):
    """An unpredicted trigger that a predicted monitor on the same signal already shows.

    Such monitors cannot tell their OFMs apart, so the trigger is no
    evidence of a missing propagation path.
    """
    for other in results:
        if other.monitor.role in ("target", "predicted") and other.triggered:
            if _same_observation(other.monitor, result.monitor) and result.triggered_classes <= other.triggered_classes:
                return True
    return False


def execute_test(tc, ref, config, library):
    """Full-cut run, leave-one-out runs for AND cuts, then the oracle."""
    base = dict(scope=tc.scope, target=tc.target, cut=tc.cut, templates=tc.templates)
    try:
        inj, log = _run_injected(tc, set(tc.cut), config, library)
    except (ActionError, EntityFault, UnboundPlaceholder, UnknownTemplate) as exc:
        return Verdict(tc.id, "InjectionError", message=f"{type(exc).__name__}: {exc}", evidence={"reference": ref.digest()}, **base)

    results = [monitor_verdict(ref, inj, m) for m in tc.monitors]
    target = next(r for r in results if r.monitor.role == "target")
    outcome = "Confirmed" if target.triggered else "NotReproduced"
    warnings = []
    if target.class_mismatch:
        warnings.append(
            f"{tc.target}: triggered by {', '.join(sorted(target.triggered_classes))}, expected {target.monitor.expected}"
        )
    findings = tuple(
        Finding(tc.cut, r.monitor.ofm, _observed_class(r), tc.id)
        for r in results
        if r.monitor.role == "unpredicted" and r.triggered and not _explained(r, results)
    )

    subset_runs = []
    masked = False
    for subset in tc.subsets:
        try:
            sub_trace, _ = _run_injected(tc, set(subset), config, library)
        except (ActionError, EntityFault) as exc:
            return Verdict(tc.id, "InjectionError", message=f"{type(exc).__name__}: {exc}", **base)
        sub = monitor_verdict(ref, sub_trace, target.monitor)
        masked = masked or sub.triggered
        subset_runs.append(
            {
                "literals": list(subset),
                "triggered": sub.triggered,
                "classes": sorted(sub.classification.classes),
                "trace": sub_trace.digest(),
            }
        )
    if masked:
        outcome = "MaskedSubsetEffect"

    monitors = []
    for r in results:
        d = r.to_dict()
        d["dt"] = _dt_summary(r)
        d["classification"] = {k: v for k, v in d["classification"].items() if k != "evidence"}
        d["evidence"] = [e.to_dict() for e in r.classification.evidence[:5]]
        monitors.append(d)
    evidence = {"reference": ref.digest(), "injected": inj.digest(), "injections": len(log)}
    return Verdict(
        tc.id,
        outcome,
        monitors=tuple(monitors),
        subset_runs=tuple(subset_runs),
        findings=findings,
        warnings=tuple(warnings),
        evidence=evidence,
        **base,
    )


def _execute_job(args):
    case_doc, config_doc, library, ref_jsonl = args
    tc = TestCase.from_dict(case_doc)
    return execute_test(tc, Trace.from_jsonl(ref_jsonl), SimulationConfig.from_dict(config_doc), library)


def run_suite(suite, config, jobs=1, cache=None):
    """Verdicts for every case; one shared reference run."""
    cfg = suite_config(config, suite)
    ref = run_reference(cfg, cache)
    if jobs <= 1 or len(suite.cases) <= 1:
        verdicts = [execute_test(tc, ref, cfg, suite.library) for tc in suite.cases]
    else:
        payload = [(tc.to_dict(), cfg.to_dict(), suite.library, ref.to_jsonl()) for tc in suite.cases]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            verdicts = list(pool.map(_execute_job, payload))
    return verdicts, ref, cfg


# ---------------------------------------------------------------------------
# report


def _propagation_graph(model):
    """Directed edges between qualified CFT nodes, across components."""
    succ = {}

    def add(a, b):
        succ.setdefault(a, set()).add(b)

    for comp in model.components:
        e = comp.cft
        if e is None:
            continue
        for edge in e.edges:
            add(qualify(comp.id, edge.src), qualify(comp.id, edge.dst))
        for f in e.ifms:
            for up, ofm in model.ifm_sources(comp.id, f):
                add(qualify(up, ofm), qualify(comp.id, f.id))
    return succ


def _reach(succ, start):
    seen, stack = set(start), list(start)
    while stack:
        for n in succ.get(stack.pop(), ()):
            if n not in seen:
                seen.add(n)
                stack.append(n)
    return seen


def suggest_edits(model, cause, ofm, failure_class):
    """Candidate CFT edits: an IFM the cause reaches should also drive an OFM of the observed class.

    Each suggestion names a component, one of its IFMs that the injected
    literals propagate to, and one of its OFMs with the observed class that
    already feeds the observed OFM.
    """
    succ = _propagation_graph(model)
    pred = {}
    for a, bs in succ.items():
        for b in bs:
            pred.setdefault(b, set()).add(a)
    downstream = _reach(succ, cause)
    upstream = _reach(pred, [ofm])
    out = []
    for comp in model.components:
        e = comp.cft
        if e is None:
            continue
        local = {}
        for edge in e.edges:
            local.setdefault(edge.src, set()).add(edge.dst)
        for f in e.ifms:
            qi = qualify(comp.id, f.id)
            if qi not in downstream:
                continue
            already = _reach(local, [f.id])
            for o in e.ofms:
                qo = qualify(comp.id, o.id)
                if o.failure_class != failure_class or qo not in upstream or o.id in already:
                    continue
                out.append({"component": comp.id, "ifm": qi, "ofm": qo})
    return sorted(out, key=lambda d: (d["component"], d["ifm"], d["ofm"]))


def assemble_report(verdicts, metadata, model_doc=None):
    """Deterministic report document: verdicts sorted by id, findings deduplicated."""
    verdicts = sorted(verdicts, key=lambda v: v.test_id)
    model = load_system(model_doc) if model_doc else None
    paths = {}
    for v in verdicts:
        for f in v.findings:
            key = (tuple(sorted(f.cause)), f.ofm)
            entry = paths.setdefault(key, {"cause": list(key[0]), "ofm": f.ofm, "classes": set(), "tests": []})
            entry["classes"].add(f.failure_class)
            entry["tests"].append(f.test_id)
    discovered = []
    for key in sorted(paths):
        entry = paths[key]
        entry["classes"] = sorted(entry["classes"])
        entry["tests"] = sorted(set(entry["tests"]))
        if model is not None:
            entry["suggestions"] = sorted(
                {
                    tuple(sorted(s.items()))
                    for cls in entry["classes"]
                    for s in suggest_edits(model, entry["cause"], entry["ofm"], cls)
                }
            )
            entry["suggestions"] = [dict(s) for s in entry["suggestions"]]
        discovered.append(entry)
    counts = {o: 0 for o in OUTCOMES}
    for v in verdicts:
        counts[v.outcome] += 1
    summary = {
        "total": len(verdicts),
        "confirmed": counts["Confirmed"],
        "not_reproduced": counts["NotReproduced"],
        "masked_subset_effect": counts["MaskedSubsetEffect"],
        "injection_error": counts["InjectionError"],
        "unmodeled_path": len(discovered),
        "warnings": sum(len(v.warnings) for v in verdicts),
    }
    body = dict(metadata)
    body.update(
        {
            "verdicts": [v.to_dict() for v in verdicts],
            "discovered_paths": discovered,
            "summary": summary,
        }
    )
    return body


def verify(suite, config, jobs=1, cache=None):
    """Run a whole suite and return the report document."""
    verdicts, ref, cfg = run_suite(suite, config, jobs, cache)
    meta = {
        "model_hash": content_hash(suite.model),
        "config_hash": cfg.config_hash(),
        "suite_id": suite.suite_id,
        "reference_trace": ref.digest(),
    }
    return assemble_report(verdicts, meta, suite.model)


def has_findings(report):
    s = report["summary"]
    return bool(s["not_reproduced"] or s["masked_subset_effect"] or s["unmodeled_path"] or s["injection_error"])


def render_text(report):
    """Plain table mirroring the generated-test-case layout, then findings."""
    rows = [("Scope", "Fault injection", "Failure monitor", "Verdict")]
    for v in report["verdicts"]:
        injection = " AND ".join(v["cut"])
        if v["templates"]:
            injection += f" [{', '.join(v['templates'])}]"
        verdict = v["outcome"]
        if v["unmodeled_paths"]:
            verdict += " +UnmodeledPath(" + ", ".join(f"{p['ofm']}:{p['class']}" for p in v["unmodeled_paths"]) + ")"
        rows.append(("+".join(v["scope"]), injection, v["target"], verdict))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    line = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    out = [line]
    for i, r in enumerate(rows):
        out.append("| " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |")
        if i == 0:
            out.append(line.replace("-", "="))
    out.append(line)
    s = report["summary"]
    out.append(
        f"total {s['total']}: confirmed {s['confirmed']}, not reproduced {s['not_reproduced']}, "
        f"masked subset effect {s['masked_subset_effect']}, injection error {s['injection_error']}, "
        f"unmodeled paths {s['unmodeled_path']}"
    )
    for p in report["discovered_paths"]:
        out.append(f"unmodeled path: {' AND '.join(p['cause'])} -> {p['ofm']} ({', '.join(p['classes'])})")
        for sug in p.get("suggestions", ()):
            out.append(f"  suggestion: in {sug['component']}, let {sug['ifm']} also cause {sug['ofm']}")
    for v in report["verdicts"]:
        for w in v["warnings"]:
            out.append(f"warning: {v['id']}: {w}")
    return "\n".join(out) + "\n"


def load_suite(doc):
    return doc if isinstance(doc, TestSuite) else TestSuite.from_dict(doc)
