"""Integer picosecond time base."""

import re

PS = 1
NS = 1_000
US = 1_000_000
MS = 1_000_000_000
S = 1_000_000_000_000

UNITS = {"ps": PS, "ns": NS, "us": US, "ms": MS, "s": S}

# Stands in for an infinite delay; far beyond any realistic stop time.
TIME_INF = 2**62

_TIME_RE = re.compile(r"^\s*(inf|\d+(?:\.\d+)?)\s*(ps|ns|us|ms|s)?\s*$")


def parse_time(value):
    """Convert ``"23 s"``, ``"100ms"``, ``"inf"`` or an int (picoseconds) to int ps.

    Decimal inputs must land on a whole picosecond.
    """
    if isinstance(value, bool):
        raise ValueError(f"not a time: {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if value != int(value):
            raise ValueError(f"fractional picoseconds: {value!r}")
        return int(value)
    m = _TIME_RE.match(str(value))
    if not m:
        raise ValueError(f"not a time: {value!r}")
    number, unit = m.groups()
    if number == "inf":
        return TIME_INF
    scale = UNITS[unit or "ps"]
    if "." in number:
        whole, frac = number.split(".")
        frac_scale = 10 ** len(frac)
        total = int(whole) * scale * frac_scale + int(frac) * scale
        if total % frac_scale:
            raise ValueError(f"fractional picoseconds: {value!r}")
        return total // frac_scale
    return int(number) * scale


def format_time(ps):
    if ps >= TIME_INF:
        return "inf"
    for unit in ("s", "ms", "us", "ns"):
        if ps % UNITS[unit] == 0 and ps != 0:
            return f"{ps // UNITS[unit]} {unit}"
    return f"{ps} ps"


def to_seconds(ps):
    return ps / S
