"""Deterministic discrete-event kernel with injectable state and signal tracing.

Time is an integer number of picoseconds.  Events at equal time run in
insertion order.  Fault injection goes through :class:`Injectable`
containers; a forced primitive shadows every write until it is released.
"""

from __future__ import annotations

import fnmatch
import hashlib
import heapq
import json
import random
import re
from dataclasses import dataclass, field

import numpy as np

from ..errors import (
    ActionError,
    BadParameter,
    CftvError,
    EntityFault,
    SchemaError,
    TypeMismatch,
    UnboundPort,
    UnknownEntityType,
    UnknownInjectable,
    UnknownSignal,
)
from ..jsonio import canonical, content_hash
from ..timeunits import parse_time

_PATH_RE = re.compile(r"^(?P<base>[A-Za-z_][\w.\-]*?)(?:\[(?P<sel>[^\]]*)\])?$")


def parse_path(path):
    """Split ``"m_Camera.pixel[10:20]"`` into ``("m_Camera.pixel", slice(10, 20))``.

    Selectors: ``[i]``, ``[i:j]`` and ``[i:j:k]`` (half-open, like Python slices).
    """
    m = _PATH_RE.match(path.strip())
    if not m:
        raise UnknownInjectable(f"malformed path {path!r}")
    sel = m.group("sel")
    if sel is None:
        return m.group("base"), None
    parts = [p.strip() for p in sel.split(":")]
    try:
        nums = [int(p, 0) if p else None for p in parts]
    except ValueError:
        raise UnknownInjectable(f"malformed selector in {path!r}") from None
    if len(nums) == 1:
        if nums[0] is None:
            raise UnknownInjectable(f"empty index in {path!r}")
        return m.group("base"), nums[0]
    if len(nums) > 3:
        raise UnknownInjectable(f"malformed selector in {path!r}")
    return m.group("base"), slice(*nums)


# ---------------------------------------------------------------------------
# injectable primitives

_SCALAR_KINDS = ("int", "float", "bool", "str", "any")


def _coerce_scalar(kind, value, path):
    if kind == "any":
        return value
    if value is None:
        raise TypeMismatch(f"{path}: null is not a {kind}")
    if isinstance(value, np.generic):
        value = value.item()
    if kind == "int":
        if isinstance(value, bool):
            return int(value)
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
    elif kind == "float":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif kind == "bool":
        if isinstance(value, bool):
            return value
        if isinstance(value, int) and value in (0, 1):
            return bool(value)
    elif kind == "str":
        if isinstance(value, str):
            return value
    raise TypeMismatch(f"{path}: cannot use {value!r} as {kind}")


class Injectable:
    """Wraps one state variable or port; ``force`` overrides reads until ``release``."""

    def __init__(self, path, value, kind=None):
        self.path = path
        if isinstance(value, np.ndarray):
            self.kind = "array"
            self.shadow = value.copy()
            self.mask = np.zeros(value.shape, dtype=bool)
            self.forced_values = np.zeros_like(value)
            self._view = None
        else:
            self.kind = kind or _infer_kind(value)
            if self.kind not in _SCALAR_KINDS:
                raise ValueError(f"unknown kind {self.kind}")
            self.shadow = _coerce_scalar(self.kind, value, path) if value is not None or self.kind == "any" else value
            self.forced = False
            self.forced_value = None

    # -- arrays -----------------------------------------------------------
    def _array_value(self, value, sel):
        dtype = self.shadow.dtype
        target_shape = self.shadow[sel].shape if sel is not None else self.shadow.shape
        if value is None or isinstance(value, (str, bool)):
            raise TypeMismatch(f"{self.path}: cannot store {value!r} in {dtype} array")
        arr = np.asarray(value)
        if arr.dtype.kind not in "iuf":
            raise TypeMismatch(f"{self.path}: non-numeric value for {dtype} array")
        if arr.shape not in ((), target_shape):
            raise TypeMismatch(f"{self.path}: shape {arr.shape} does not fit {target_shape}")
        if dtype.kind in "iu":
            if arr.dtype.kind == "f" and not np.all(np.mod(arr, 1) == 0):
                raise TypeMismatch(f"{self.path}: fractional value for integer array")
            info = np.iinfo(dtype)
            if arr.size and (arr.min() < info.min or arr.max() > info.max):
                raise TypeMismatch(f"{self.path}: value out of range for {dtype}")
        return arr.astype(dtype, copy=False)

    def _check_sel(self, sel):
        if sel is None:
            return
        n = self.shadow.shape[0]
        if isinstance(sel, int):
            if not -n <= sel < n:
                raise UnknownInjectable(f"{self.path}[{sel}] out of range")
        else:
            start, stop, _ = sel.indices(n)
            if (sel.start is not None and not -n <= sel.start <= n) or (sel.stop is not None and not -n <= sel.stop <= n):
                raise UnknownInjectable(f"{self.path}[{sel.start}:{sel.stop}] out of range")

    @property
    def is_forced(self):
        if self.kind == "array":
            return bool(self.mask.any())
        return self.forced

    def read(self, sel=None):
        if self.kind != "array":
            if sel is not None:
                raise UnknownInjectable(f"{self.path} is not an array")
            return self.forced_value if self.forced else self.shadow
        self._check_sel(sel)
        if self._view is None:
            self._view = np.where(self.mask, self.forced_values, self.shadow)
        view = self._view if sel is None else self._view[sel]
        return view.copy() if isinstance(view, np.ndarray) else view.item()

    def write(self, value, sel=None):
        """Entity-side write.  While forced, only the shadow changes."""
        if self.kind != "array":
            if sel is not None:
                raise UnknownInjectable(f"{self.path} is not an array")
            self.shadow = _coerce_scalar(self.kind, value, self.path)
            return
        self._check_sel(sel)
        arr = self._array_value(value, sel)
        if sel is None:
            self.shadow[...] = arr
        else:
            self.shadow[sel] = arr
        self._view = None

    def force(self, value, sel=None):
        if self.kind != "array":
            if sel is not None:
                raise UnknownInjectable(f"{self.path} is not an array")
            self.forced_value = _coerce_scalar(self.kind, value, self.path)
            self.forced = True
            return
        self._check_sel(sel)
        arr = self._array_value(value, sel)
        if sel is None:
            self.forced_values[...] = arr
            self.mask[...] = True
        else:
            self.forced_values[sel] = arr
            self.mask[sel] = True
        self._view = None

    def release(self, sel=None):
        if self.kind != "array":
            if sel is not None:
                raise UnknownInjectable(f"{self.path} is not an array")
            self.forced = False
            self.forced_value = None
            return
        self._check_sel(sel)
        if sel is None:
            self.mask[...] = False
        else:
            self.mask[sel] = False
        self._view = None


def _infer_kind(value):
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "str"
    return "any"


# ---------------------------------------------------------------------------
# traces


def array_digest(arr):
    return hashlib.blake2b(np.ascontiguousarray(arr).tobytes(), digest_size=8).hexdigest()


def trace_value(value):
    """Canonical JSON-able form of a payload or state value."""
    if hasattr(value, "trace_value"):
        return trace_value(value.trace_value())
    if isinstance(value, np.ndarray):
        return {"digest": array_digest(value), "len": int(value.size)}
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(k): trace_value(v) for k, v in sorted(value.items())}
    if isinstance(value, (list, tuple)):
        return [trace_value(v) for v in value]
    return value


@dataclass(frozen=True)
class TraceRecord:
    t_ps: int
    sig: str
    v: object

    def to_dict(self):
        return {"t_ps": self.t_ps, "sig": self.sig, "v": self.v}


@dataclass
class Trace:
    records: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def signal(self, sig):
        return [r for r in self.records if r.sig == sig]

    def signals(self):
        return sorted({r.sig for r in self.records})

    def first(self, sig):
        for r in self.records:
            if r.sig == sig:
                return r
        return None

    def to_jsonl(self):
        lines = [canonical({"header": self.metadata})]
        lines.extend(canonical(r.to_dict()) for r in self.records)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            return cls()
        head = json.loads(lines[0])
        meta = head.get("header", {}) if isinstance(head, dict) else {}
        recs = [TraceRecord(int(d["t_ps"]), d["sig"], d["v"]) for d in map(json.loads, lines[1:])]
        return cls(recs, meta)

    def digest(self):
        body = "\n".join(canonical(r.to_dict()) for r in self.records)
        return hashlib.sha256(body.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class EntitySpec:
    type: str
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Binding:
    src: str  # "inst.outport"
    dst: str  # "inst.inport"


@dataclass(frozen=True)
class SimulationConfig:
    entities: tuple = ()
    bindings: tuple = ()
    trace: tuple = ("*",)
    stop_time: int = 1
    seed: int = 0

    def __post_init__(self):
        names = [e.name for e in self.entities]
        if len(set(names)) != len(names):
            raise SchemaError("entity instance names must be unique")
        if self.stop_time <= 0:
            raise SchemaError("stop_time must be positive")

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise SchemaError("simulation config must be an object")
        try:
            ents = tuple(EntitySpec(e["type"], e["name"], dict(e.get("params", {}))) for e in doc.get("entities", []))
            binds = tuple(Binding(b["from"], b["to"]) for b in doc.get("bindings", []))
            stop = parse_time(doc.get("stop_time", 1))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad simulation config: {exc}") from exc
        trace = doc.get("trace", ["*"])
        if isinstance(trace, str):
            trace = [trace]
        return cls(ents, binds, tuple(trace), stop, int(doc.get("seed", 0)))

    def to_dict(self):
        return {
            "entities": [{"type": e.type, "name": e.name, "params": e.params} for e in self.entities],
            "bindings": [{"from": b.src, "to": b.dst} for b in self.bindings],
            "trace": list(self.trace),
            "stop_time": self.stop_time,
            "seed": self.seed,
        }

    def config_hash(self):
        return content_hash(self.to_dict())

    def entity(self, name):
        for e in self.entities:
            if e.name == name:
                return e
        raise KeyError(name)


# ---------------------------------------------------------------------------
# entities


class Entity:
    """Base class for simulation entities.

    Subclasses declare ``inports``/``outports``, parameter ``defaults`` and
    which parameters are times (``time_params``), then override
    ``setup``/``on_start``/``on_timer``/``on_message``.
    """

    type_name = "Entity"
    inports = ()
    outports = ()
    defaults = {}
    time_params = ()

    def __init__(self, name, params, sim):
        self.name = name
        self.sim = sim
        unknown = sorted(set(params) - set(self.defaults))
        if unknown:
            raise BadParameter(f"{name}: unknown parameter(s) {', '.join(unknown)}")
        merged = dict(self.defaults)
        merged.update(params)
        for key in self.time_params:
            try:
                merged[key] = parse_time(merged[key])
            except ValueError as exc:
                raise BadParameter(f"{name}.{key}: {exc}") from None
        for key, default in self.defaults.items():
            if key in self.time_params or default is None:
                continue
            if isinstance(default, (int, float)) and not isinstance(default, bool):
                v = merged[key]
                if not isinstance(v, (int, float)) or isinstance(v, bool):
                    raise BadParameter(f"{name}.{key}: expected a number, got {v!r}")
        self.params = merged
        self.rng = random.Random(f"{sim.config.seed}:{name}")
        self.state("alive", True, "bool")
        self.setup()

    # declared state ------------------------------------------------------
    def state(self, var, initial, kind=None):
        return self.sim._register(f"{self.name}.{var}", Injectable(f"{self.name}.{var}", initial, kind))

    def read(self, var, sel=None):
        return self.sim.injectables[f"{self.name}.{var}"].read(sel)

    def write(self, var, value, sel=None):
        path = f"{self.name}.{var}"
        inj = self.sim.injectables[path]
        inj.write(value, sel)
        self.sim._committed(path, inj)

    def write_if_changed(self, var, value):
        if self.read(var) != value:
            self.write(var, value)

    # time and messaging ---------------------------------------------------
    @property
    def now(self):
        return self.sim.now

    def schedule(self, delay, tag, payload=None):
        self.sim._schedule(self.sim.now + int(delay), "timer", self.name, (tag, payload))

    def send(self, port, value):
        if port not in self.outports:
            raise UnboundPort(f"{self.name} has no outport {port!r}")
        self.sim._send(self.name, port, value)

    # callbacks ------------------------------------------------------------
    def setup(self):
        pass

    def on_start(self):
        pass

    def on_timer(self, tag, payload):
        pass

    def on_message(self, port, value):
        pass


# ---------------------------------------------------------------------------
# simulation instance


class Simulation:
    """One configured world.  Single-threaded; independent of other instances."""

    def __init__(self, config, registry):
        self.config = config
        self.now = 0
        self.injectables = {}
        self.entities = {}
        self.links = {}
        self.btms = []
        self.injection_log = []
        self.records = []
        self._queue = []
        self._seq = 0
        self._started = False
        self._boundary = None
        self._wakeups = set()
        self._dirty = set()
        self._trace_patterns = tuple(config.trace)
        self._traced_cache = {}
        for spec in config.entities:
            cls = registry.get(spec.type)
            if cls is None:
                raise UnknownEntityType(f"unknown entity type {spec.type!r}")
            ent = cls(spec.name, spec.params, self)
            self.entities[spec.name] = ent
            for port in ent.inports:
                self._register(f"{spec.name}.{port}", Injectable(f"{spec.name}.{port}", None, "any"))
                self._register(f"{spec.name}.{port}.delay", Injectable(f"{spec.name}.{port}.delay", 0, "int"))
        for b in config.bindings:
            src_inst, _, src_port = b.src.rpartition(".")
            dst_inst, _, dst_port = b.dst.rpartition(".")
            if src_inst not in self.entities or src_port not in self.entities[src_inst].outports:
                raise UnboundPort(f"binding source {b.src!r} is not a declared outport")
            if dst_inst not in self.entities or dst_port not in self.entities[dst_inst].inports:
                raise UnboundPort(f"binding target {b.dst!r} is not a declared inport")
            self.links.setdefault((src_inst, src_port), []).append((dst_inst, dst_port))

    # -- registration / tracing -------------------------------------------
    def _register(self, path, inj):
        if path in self.injectables:
            raise BadParameter(f"duplicate state path {path!r}")
        self.injectables[path] = inj
        return inj

    def traced(self, sig):
        hit = self._traced_cache.get(sig)
        if hit is None:
            hit = any(fnmatch.fnmatchcase(sig, pat) for pat in self._trace_patterns)
            self._traced_cache[sig] = hit
        return hit

    def _record(self, sig, value):
        if self.traced(sig):
            self.records.append(TraceRecord(self.now, sig, trace_value(value)))

    def _committed(self, path, inj):
        self._dirty.add(path)
        if self.traced(path):
            self._record(path, inj.read())

    # -- scheduling ---------------------------------------------------------
    def _schedule(self, t, kind, target, payload):
        if t < self.now:
            raise CftvError(f"cannot schedule into the past ({t} < {self.now})")
        heapq.heappush(self._queue, (t, self._seq, kind, target, payload))
        self._seq += 1

    def _send(self, inst, port, value):
        self._record(f"{inst}.{port}", value)
        for dst, dport in self.links.get((inst, port), []):
            self._schedule(self.now, "deliver", dst, (dport, value))

    # -- injection API ------------------------------------------------------
    def _lookup(self, path):
        base, sel = parse_path(path)
        inj = self.injectables.get(base)
        if inj is None:
            raise UnknownInjectable(f"no injectable at {base!r}")
        return inj, sel

    def force(self, path, value):
        inj, sel = self._lookup(path)
        inj.force(value, sel)
        self._dirty.add(inj.path)

    def release(self, path):
        inj, sel = self._lookup(path)
        inj.release(sel)
        self._dirty.add(inj.path)

    def read_signal(self, path):
        base, sel = parse_path(path)
        inj = self.injectables.get(base)
        if inj is not None:
            return inj.read(sel)
        inst, _, param = base.rpartition(".")
        ent = self.entities.get(inst)
        if ent is not None and param in ent.params and sel is None:
            return ent.params[param]
        raise UnknownSignal(f"unknown signal {path!r}")

    def has_path(self, path):
        try:
            base, _ = parse_path(path)
        except CftvError:
            return False
        return base in self.injectables

    # -- BTM hooks ----------------------------------------------------------
    def add_btm(self, btm):
        self.btms.append(btm)
        btm.attach(self)

    def emit(self, event, source=None):
        for b in self.btms:
            b.offer_event(event)

    def _evaluate_btms(self):
        if not self.btms:
            return
        rounds = max(b.location_count for b in self.btms) + 1
        for _ in range(rounds):
            progressed = False
            for b in self.btms:
                fired = b.evaluate(self, self.now)
                if fired is None:
                    continue
                self.injection_log.append((self.now, b.name, fired.src, fired.tgt))
                if fired.src != fired.tgt or fired.emits:
                    progressed = True
            if not progressed:
                break
        for b in self.btms:
            t = b.next_wakeup(self.now)
            if t is not None and t > self.now and t not in self._wakeups:
                self._wakeups.add(t)
                self._schedule(t, "wake", None, None)

    def _btm_paths(self):
        paths = set()
        for b in self.btms:
            paths |= b.referenced_paths
        return paths

    # -- main loop ----------------------------------------------------------
    def _start(self):
        self._started = True
        for name in self.entities:
            self._schedule(0, "start", name, None)
        self._boundary = 0
        self._evaluate_btms()

    def run_until(self, t_stop):
        """Dispatch every event with time <= ``t_stop``; returns the trace so far."""
        t_stop = parse_time(t_stop)
        if t_stop < self.now:
            raise CftvError("t_stop lies in the past")
        if not self._started:
            self._start()
        watched = self._btm_paths()
        try:
            while self._queue and self._queue[0][0] <= t_stop:
                t = self._queue[0][0]
                if t != self._boundary:
                    self.now = t
                    self._boundary = t
                    for b in self.btms:
                        b.clear_events()
                    self._evaluate_btms()
                    continue
                _, _, kind, target, payload = heapq.heappop(self._queue)
                self._dirty.clear()
                self._dispatch(kind, target, payload)
                if watched and self._dirty & watched:
                    self._evaluate_btms()
        except ActionError as exc:
            exc.trace = self.trace()
            raise
        self.now = t_stop
        return self.trace()

    def _dispatch(self, kind, target, payload):
        if kind == "wake":
            self._wakeups.discard(self.now)
            return
        ent = self.entities[target]
        try:
            if kind == "deliver":
                port, value = payload
                pin = self.injectables[f"{target}.{port}"]
                pin.write(value)
                self._dirty.add(pin.path)
                observed = pin.read()
                if observed is None:
                    return
                delay = self.injectables[f"{target}.{port}.delay"].read()
                if delay > 0:
                    self._schedule(self.now + delay, "handle", target, (port, observed))
                    return
                self._handle(ent, port, observed)
                return
            if kind == "handle":
                self._handle(ent, *payload)
                return
            if not ent.read("alive"):
                return
            if kind == "start":
                ent.on_start()
            elif kind == "timer":
                ent.on_timer(*payload)
        except CftvError:
            raise
        except Exception as exc:  # entity bug: abort with what we have
            raise EntityFault(f"{target}: {type(exc).__name__}: {exc}", trace=self.trace()) from exc

    def _handle(self, ent, port, value):
        self._record(f"{ent.name}.{port}", value)
        if ent.read("alive"):
            ent.on_message(port, value)

    def trace(self):
        meta = {
            "config_hash": self.config.config_hash(),
            "seed": self.config.seed,
            "signals": self.signal_names(),
            "t_end": self.now,
        }
        return Trace(list(self.records), meta)

    def signal_names(self):
        """Every traceable signal of this configuration that the trace filter keeps."""
        names = set(self.injectables)
        for ent in self.entities.values():
            names.update(f"{ent.name}.{p}" for p in ent.outports)
        return sorted(n for n in names if self.traced(n))


def build_simulation(config, registry=None):
    if registry is None:
        from .entities import REGISTRY as registry
    return Simulation(config, registry)
