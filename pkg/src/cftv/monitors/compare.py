"""Reference/injected trace comparison and failure classification."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass

CLASSES = ("content", "early", "late", "halt", "erratic")
# aggregation precedence, strongest first
PRECEDENCE = ("halt", "late", "early", "content", "erratic")


@dataclass(frozen=True)
class Match:
    ref: object  # TraceRecord or None
    inj: object

    @property
    def dt(self):
        if self.ref is None or self.inj is None:
            return None
        return self.inj.t_ps - self.ref.t_ps


@dataclass(frozen=True)
class Evidence:
    ref: object
    inj: object
    dt: object
    cls: str

    def to_dict(self):
        rec = lambda r: None if r is None else {"t_ps": r.t_ps, "v": r.v}  # noqa: E731
        return {"ref": rec(self.ref), "inj": rec(self.inj), "dt_ps": self.dt, "class": self.cls}


@dataclass(frozen=True)
class Classification:
    classes: frozenset = frozenset()
    evidence: tuple = ()

    @property
    def primary(self):
        for c in PRECEDENCE:
            if c in self.classes:
                return c
        return next(iter(sorted(self.classes)), None)

    @property
    def equivalent(self):
        return not self.classes

    def to_dict(self):
        return {"classes": sorted(self.classes), "primary": self.primary, "evidence": [e.to_dict() for e in self.evidence]}


def default_window(ref_records):
    """Median gap between consecutive reference records; infinite for fewer than two."""
    if len(ref_records) < 2:
        return math.inf
    gaps = [b.t_ps - a.t_ps for a, b in zip(ref_records, ref_records[1:])]
    return statistics.median(gaps)


def align(ref, inj, signal, window=None):
    """Order-preserving nearest-match alignment of one signal's records.

    Each reference record, in order, pairs with the nearest inj record that
    lies after the previous pair and within ``window``.  Leftovers become
    ref-only (omissions) or inj-only (commissions).  Output is in time order.
    """
    r = ref.signal(signal) if hasattr(ref, "signal") else list(ref)
    j = inj.signal(signal) if hasattr(inj, "signal") else list(inj)
    if window is None:
        window = default_window(r)
    pairs = []
    used = [False] * len(j)
    lo = 0
    for rec in r:
        best, best_d = None, None
        for k in range(lo, len(j)):
            d = abs(j[k].t_ps - rec.t_ps)
            if j[k].t_ps - rec.t_ps > window:
                break
            if d <= window and (best_d is None or d < best_d):
                best, best_d = k, d
        if best is None:
            pairs.append(Match(rec, None))
        else:
            used[best] = True
            pairs.append(Match(rec, j[best]))
            lo = best + 1
    out = list(pairs)
    out.extend(Match(None, j[k]) for k in range(len(j)) if not used[k])
    out.sort(key=lambda m: (min(x.t_ps for x in (m.ref, m.inj) if x is not None), m.ref is None))
    return out


def _t(m):
    return (m.ref or m.inj).t_ps


def exact(a, b):
    return a == b


def numeric(tol):
    def cmp(a, b):
        nums = (int, float)
        if isinstance(a, nums) and isinstance(b, nums) and not isinstance(a, bool) and not isinstance(b, bool):
            return abs(a - b) <= tol
        return a == b

    return cmp


def make_comparator(spec):
    if spec in (None, "exact"):
        return exact
    if isinstance(spec, (int, float)):
        return numeric(float(spec))
    if isinstance(spec, dict) and "numeric" in spec:
        return numeric(float(spec["numeric"]))
    raise ValueError(f"unknown comparator {spec!r}")


def classify(matches, eps=0, comparator=exact, horizon=None):
    """Aggregate per-record evidence into a set of failure classes.

    With a ``horizon``, unmatched records later than it are ignored: near the
    end of a finite run a shifted record may simply fall past the stop time.
    """
    if eps < 0:
        raise ValueError("time tolerance must be non-negative")
    if horizon is not None:
        matches = [m for m in matches if not (m.ref is None or m.inj is None) or _t(m) <= horizon]
    evidence = []
    classes = set()

    ref_seq = [m for m in matches if m.ref is not None]
    # the ref-only suffix (in reference order)
    suffix = 0
    for m in reversed(ref_seq):
        if m.inj is not None:
            break
        suffix += 1
    halt = False
    if suffix:
        start = ref_seq[len(ref_seq) - suffix].ref.t_ps
        halt = not any(m.inj is not None and m.inj.t_ps > start for m in matches)
    suffix_ids = {id(m) for m in ref_seq[len(ref_seq) - suffix :]} if halt else set()

    for m in matches:
        if m.ref is None:
            cls = "erratic"
        elif m.inj is None:
            cls = "halt" if id(m) in suffix_ids else "erratic"
        else:
            same = comparator(m.ref.v, m.inj.v)
            dt = m.dt
            if abs(dt) <= eps:
                cls = None if same else "content"
            elif not same:
                cls = "erratic"
            else:
                cls = "late" if dt > 0 else "early"
        if cls is not None:
            classes.add(cls)
            evidence.append(Evidence(m.ref, m.inj, m.dt, cls))

    if "halt" not in classes and len(classes & {"content", "early", "late"}) >= 2:
        classes.add("erratic")
    return Classification(frozenset(classes), tuple(evidence))


@dataclass(frozen=True)
class FailureMonitor:
    signal: str
    eps: int = 0
    window: object = None  # None: median reference gap
    comparator: object = "exact"
    classes: tuple = CLASSES  # classes that trigger this monitor
    query: object = None
    ofm: str = ""
    expected: str = ""  # failure class of the bound OFM
    role: str = "target"

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        if self.window is not None and self.window < self.eps:
            raise ValueError("window must be at least eps")

    def to_dict(self):
        return {
            "signal": self.signal,
            "eps": self.eps,
            "window": self.window,
            "comparator": self.comparator,
            "classes": list(self.classes),
            "query": self.query,
            "ofm": self.ofm,
            "expected": self.expected,
            "role": self.role,
        }

    @classmethod
    def from_dict(cls, d):
        from ..timeunits import parse_time

        window = d.get("window")
        return cls(
            signal=d["signal"],
            eps=parse_time(d.get("eps", 0)),
            window=None if window is None else parse_time(window),
            comparator=d.get("comparator", "exact"),
            classes=tuple(d.get("classes") or CLASSES),
            query=d.get("query"),
            ofm=d.get("ofm", ""),
            expected=d.get("expected", ""),
            role=d.get("role", "target"),
        )


@dataclass(frozen=True)
class MonitorResult:
    monitor: FailureMonitor
    classification: Classification
    query_mismatch: bool = False
    query_ref: object = None
    query_inj: object = None

    @property
    def triggered_classes(self):
        return frozenset(self.classification.classes) & frozenset(self.monitor.classes)

    @property
    def triggered(self):
        return bool(self.triggered_classes) or self.query_mismatch

    @property
    def class_mismatch(self):
        """Triggered, but by a class other than the OFM's own."""
        exp = self.monitor.expected
        return bool(self.triggered_classes) and bool(exp) and exp not in self.triggered_classes

    def to_dict(self):
        return {
            "signal": self.monitor.signal,
            "ofm": self.monitor.ofm,
            "role": self.monitor.role,
            "classification": self.classification.to_dict(),
            "triggered": self.triggered,
            "triggered_classes": sorted(self.triggered_classes),
            "query_mismatch": self.query_mismatch,
            "query_ref": self.query_ref,
            "query_inj": self.query_inj,
        }


def monitor_verdict(ref, inj, monitor):
    from .ctl import check_query, parse_query

    window = monitor.window
    if window is None:
        window = default_window(ref.signal(monitor.signal) if hasattr(ref, "signal") else ref)
    matches = align(ref, inj, monitor.signal, window)
    horizon = None
    ends = [getattr(t, "metadata", {}).get("t_end") for t in (ref, inj)]
    if None not in ends and window != math.inf:
        horizon = min(ends) - window
    cls = classify(matches, monitor.eps, make_comparator(monitor.comparator), horizon)
    if not monitor.query:
        return MonitorResult(monitor, cls)
    q = parse_query(monitor.query)
    known = set(ref.signals()) | set(inj.signals()) | set(ref.metadata.get("signals", ())) | set(inj.metadata.get("signals", ()))
    a = check_query(ref, q, known)
    b = check_query(inj, q, known)
    return MonitorResult(monitor, cls, a != b, a, b)
