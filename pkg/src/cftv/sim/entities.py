"""Entity catalog: the coasting-assistant pipeline, bus channels and a generic Boolean entity.

Image processing is abstracted.  The camera renders a road scene into a
flat ``uint8`` pixel array; the speed sign is a square of ``sign_value``
pixels whose size grows as the vehicle approaches.  Downstream stages only
measure how much of the sign region still carries sign pixels.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..errors import BadParameter
from ..timeunits import S
from .kernel import Entity, array_digest


@dataclass(frozen=True)
class Frame:
    seq: int
    rows: int
    cols: int
    pixels: np.ndarray
    roi: tuple  # (top, left, height, width) of the sign, or ()
    digest: str

    def trace_value(self):
        return {"seq": self.seq, "digest": self.digest}


@dataclass(frozen=True)
class Segment:
    seq: int
    pixels: np.ndarray
    digest: str

    def trace_value(self):
        return {"seq": self.seq, "digest": self.digest}


def intact_fraction(region, sign_value):
    if region.size == 0:
        return 0.0
    return float(np.count_nonzero(region == sign_value)) / region.size


class Camera(Entity):
    type_name = "Camera"
    outports = ("image",)
    defaults = {
        "period": "100 ms",
        "rows": 720,
        "cols": 719,
        "background": 0x80,
        "sign_value": 0xA5,
        "sign_visible": "28.8 s",
        "sign_duration": "3 s",
        "sign_top": 199,
        "sign_left": 400,
        "sign_size": 12,
        "sign_growth": 50,  # rows per second
    }
    time_params = ("period", "sign_visible", "sign_duration")

    def setup(self):
        p = self.params
        largest = p["sign_size"] + p["sign_duration"] * p["sign_growth"] // S
        if p["sign_top"] + largest > p["rows"] or p["sign_left"] + largest > p["cols"]:
            raise BadParameter(f"{self.name}: sign leaves the {p['rows']}x{p['cols']} grid")
        if p["period"] <= 0:
            raise BadParameter(f"{self.name}: period must be positive")
        self._blank = np.full(p["rows"] * p["cols"], p["background"], dtype=np.uint8)
        self.state("pixel", self._blank)
        self.state("period", p["period"], "int")
        self.state("seq", 0, "int")

    def sign_box(self, t):
        p = self.params
        age = t - p["sign_visible"]
        if age < 0 or age >= p["sign_duration"]:
            return ()
        size = p["sign_size"] + age * p["sign_growth"] // S
        return (p["sign_top"], p["sign_left"], size, size)

    def render(self, t):
        p = self.params
        frame = self._blank.copy()
        box = self.sign_box(t)
        if box:
            top, left, h, w = box
            frame.reshape(p["rows"], p["cols"])[top : top + h, left : left + w] = p["sign_value"]
        return frame, box

    def on_start(self):
        self.schedule(self.read("period"), "frame")

    def on_timer(self, tag, payload):
        p = self.params
        seq = self.read("seq") + 1
        self.write("seq", seq)
        frame, box = self.render(self.now)
        self.write("pixel", frame)
        seen = self.read("pixel")
        self.send("image", Frame(seq, p["rows"], p["cols"], seen, box, array_digest(seen)))
        self.schedule(self.read("period"), "frame")


class CircleRecog(Entity):
    """Finds the sign region; forwards the crop and a distance estimate."""

    type_name = "CircleRecog"
    inports = ("image",)
    outports = ("segment", "distance")
    defaults = {"theta_detect": 0.25, "sign_value": 0xA5, "focal": 1500}

    def on_message(self, port, frame):
        if not frame.roi:
            return
        top, left, h, w = frame.roi
        crop = frame.pixels.reshape(frame.rows, frame.cols)[top : top + h, left : left + w]
        if intact_fraction(crop, self.params["sign_value"]) < self.params["theta_detect"]:
            return
        crop = crop.copy()
        self.send("segment", Segment(frame.seq, crop, array_digest(crop)))
        self.send("distance", int(self.params["focal"] // h))


class SlClassif(Entity):
    """Classifies a segment as the configured limit when enough of it is intact."""

    type_name = "SlClassif"
    inports = ("segment",)
    outports = ("limit",)
    defaults = {"theta": 0.6, "sign_value": 0xA5, "limit": 80}

    def on_message(self, port, segment):
        if intact_fraction(segment.pixels, self.params["sign_value"]) >= self.params["theta"]:
            self.send("limit", self.params["limit"])


class CoastingAssist(Entity):
    """Turns the received limit and sign distance into a driving hint."""

    type_name = "CoastingAssist"
    inports = ("limit", "distance")
    outports = ("hint",)
    defaults = {"speed": 100, "brake_margin": 40}

    def setup(self):
        self.state("speed_limit", None, "any")
        self.state("advice", None, "any")
        self.distance = None
        self.last_hint = None

    def on_message(self, port, value):
        if port == "limit":
            self.write_if_changed("speed_limit", value)
        else:
            self.distance = value
        self._update()

    def _update(self):
        limit = self.read("speed_limit")
        if limit is None or self.distance is None:
            return
        excess = self.params["speed"] - limit
        if excess > self.params["brake_margin"]:
            advice = "brake"
        elif excess > 0:
            advice = "coast"
        else:
            advice = "keep"
        hint = {"limit": limit, "advice": advice}
        if hint != self.last_hint:
            self.last_hint = hint
            self.write_if_changed("advice", advice)
            self.send("hint", hint)


class HMI(Entity):
    type_name = "HMI"
    inports = ("image", "hint")
    defaults = {}

    def setup(self):
        self.state("shown_image", None, "any")
        self.state("limit_shown", None, "any")
        self.state("advice_shown", None, "any")

    def on_message(self, port, value):
        if port == "image":
            self.write("shown_image", value.trace_value())
        else:
            self.write_if_changed("limit_shown", value["limit"])
            self.write_if_changed("advice_shown", value["advice"])


class Channel(Entity):
    """Transaction-level link with latency and loss injectors."""

    type_name = "Channel"
    inports = ("in",)
    outports = ("out",)
    defaults = {"latency": "0 ps", "role": "generic", "drop_every": 0}
    time_params = ("latency",)

    def setup(self):
        self.state("latency", self.params["latency"], "int")
        self.state("loss", False, "bool")
        self.count = 0

    def on_message(self, port, value):
        self.count += 1
        if self.read("loss"):
            return
        every = self.params["drop_every"]
        if every and self.count % every == 0:
            return
        delay = self.read("latency")
        if delay > 0:
            self.schedule(delay, "forward", value)
        else:
            self.send("out", value)

    def on_timer(self, tag, payload):
        self.send("out", payload)


# ---------------------------------------------------------------------------
# generic Boolean entity for synthetic fixtures

_TOKEN = re.compile(r"\s*(?:(AND|OR)\s*\(|([A-Za-z_][\w]*(?:\.[\w]+)?)|(,)|(\)))")


def parse_logic(text):
    """Parse ``OR(f1, AND(in.x, f2))`` into nested tuples."""
    pos = 0

    def expr():
        nonlocal pos
        m = _TOKEN.match(text, pos)
        if not m:
            raise BadParameter(f"bad logic expression {text!r}")
        pos = m.end()
        if m.group(1):
            args = [expr()]
            while True:
                m2 = _TOKEN.match(text, pos)
                if m2 and m2.group(3):
                    pos = m2.end()
                    args.append(expr())
                elif m2 and m2.group(4):
                    pos = m2.end()
                    return (m.group(1), tuple(args))
                else:
                    raise BadParameter(f"bad logic expression {text!r}")
        if m.group(2):
            return ("ATOM", m.group(2))
        raise BadParameter(f"bad logic expression {text!r}")

    tree = expr()
    if text[pos:].strip():
        raise BadParameter(f"trailing input in {text!r}")
    return tree


class BoolLogic(Entity):
    """Emits per-outport failure flags computed from internal faults and inputs.

    ``faults`` become injectable booleans; every output flag is written as a
    0/1 state variable on each emission.  Entities without inputs emit
    periodically; the others react to incoming messages.
    """

    type_name = "BoolLogic"
    defaults = {"period": "100 ms", "faults": None, "inputs": None, "outputs": None}
    time_params = ("period",)

    def __init__(self, name, params, sim):
        outputs = params.get("outputs") or {}
        if not isinstance(outputs, dict):
            raise BadParameter(f"{name}.outputs must map outport -> {{flag: expression}}")
        self.inports = tuple(params.get("inputs") or ())
        self.outports = tuple(outputs)
        self.logic = {port: {flag: parse_logic(e) for flag, e in sorted(flags.items())} for port, flags in outputs.items()}
        super().__init__(name, params, sim)

    def setup(self):
        for f in self.params["faults"] or ():
            self.state(f, False, "bool")
        self.received = {port: {} for port in self.inports}
        for flags in self.logic.values():
            for flag in flags:
                self.state(flag, 0, "int")

    def _value(self, node):
        kind, arg = node
        if kind == "AND":
            return all(self._value(a) for a in arg)
        if kind == "OR":
            return any(self._value(a) for a in arg)
        if "." in arg:
            port, flag = arg.split(".")
            return bool(self.received.get(port, {}).get(flag, 0))
        return bool(self.read(arg))

    def _emit(self):
        for port, flags in self.logic.items():
            values = {flag: int(self._value(node)) for flag, node in flags.items()}
            for flag, v in values.items():
                self.write(flag, v)
            self.send(port, values)

    def on_start(self):
        if not self.inports:
            self.schedule(self.params["period"], "tick")

    def on_timer(self, tag, payload):
        self._emit()
        self.schedule(self.params["period"], "tick")

    def on_message(self, port, value):
        self.received[port] = dict(value)
        self._emit()


REGISTRY = {cls.type_name: cls for cls in (Camera, CircleRecog, SlClassif, CoastingAssist, HMI, Channel, BoolLogic)}
