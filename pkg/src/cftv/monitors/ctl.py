"""CTL-style trace queries evaluated on a single linear trace.

On a linear trace the path quantifiers A and E coincide, so ``AG`` and
``EG`` (and so on) share one implementation.  States are the distinct
timestamps at which any queried signal has a record; each signal keeps its
last value until it is written again.

Grammar::

    q    := or
    or   := and ("||" and)*
    and  := un ("&&" un)*
    un   := "!" un | ("AG"|"AF"|"AX"|"EG"|"EF"|"EX") "(" q ")"
          | ("A"|"E") "[" q "U" q "]" | "(" q ")" | atom | "true" | "false"
    atom := "sig(" path ")" op literal
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass

from ..errors import ExprSyntaxError, UnknownSignalInQuery

_TOKEN = re.compile(
    r"""\s*(?:
      (?P<str>"(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*')
    | (?P<num>-?\d+\.\d+|-?\d+)
    | (?P<op>&&|\|\||==|!=|<=|>=|<|>|!|\(|\)|\[|\])
    | (?P<word>[AE](?=\s*\[)|[A-Za-z_][\w.]*(?:\[[^\]]*\])?)
    )""",
    re.VERBOSE,
)
_OPS = {"==": operator.eq, "!=": operator.ne, "<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge}
UNARY = ("AG", "AF", "AX", "EG", "EF", "EX")


@dataclass(frozen=True)
class TraceQuery:
    text: str
    ast: tuple

    def signals(self):
        out = set()

        def walk(n):
            if n[0] == "atom":
                out.add(n[1])
            for c in n[1:]:
                if isinstance(c, tuple):
                    walk(c)

        walk(self.ast)
        return out


def _tokens(text):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExprSyntaxError(f"cannot tokenize query at column {pos}: {text!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokens(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            raise ExprSyntaxError(f"expected {value or 'a token'} in query {self.text!r}")
        self.i += 1
        return tok

    def query(self):
        n = self.conj()
        while self.peek()[1] == "||":
            self.take()
            n = ("or", n, self.conj())
        return n

    def conj(self):
        n = self.unary()
        while self.peek()[1] == "&&":
            self.take()
            n = ("and", n, self.unary())
        return n

    def unary(self):
        kind, val = self.peek()
        if val == "!":
            self.take()
            return ("not", self.unary())
        if val == "(":
            self.take()
            n = self.query()
            self.take(")")
            return n
        if kind == "word" and val in UNARY:
            self.take()
            self.take("(")
            n = self.query()
            self.take(")")
            return (val[1], n)  # quantifier dropped: linear trace
        if kind == "word" and val in ("A", "E"):
            self.take()
            self.take("[")
            left = self.query()
            self.take("U")
            right = self.query()
            self.take("]")
            return ("U", left, right)
        if kind == "word" and val in ("true", "false"):
            self.take()
            return ("const", val == "true")
        if kind == "word" and val == "sig":
            self.take()
            self.take("(")
            _, path = self.take()
            self.take(")")
            kind, op = self.take()
            if op not in _OPS:
                raise ExprSyntaxError(f"expected a comparison after sig({path}) in {self.text!r}")
            return ("atom", path, op, self.literal())
        raise ExprSyntaxError(f"unexpected {val!r} in query {self.text!r}")

    def literal(self):
        kind, val = self.take()
        if kind == "str":
            return bytes(val[1:-1], "utf-8").decode("unicode_escape")
        if kind == "num":
            return float(val) if "." in val else int(val)
        if val in ("true", "false"):
            return val == "true"
        if val == "null":
            return None
        raise ExprSyntaxError(f"expected a literal, got {val!r} in {self.text!r}")


def parse_query(text):
    if isinstance(text, TraceQuery):
        return text
    p = _Parser(str(text))
    ast = p.query()
    if p.i != len(p.toks):
        raise ExprSyntaxError(f"trailing input in query {text!r}")
    return TraceQuery(str(text), ast)


def states(trace, signals):
    """Signal valuations at each timestamp where a queried signal changes."""
    current = {s: None for s in signals}
    out = []
    last_t = None
    for r in trace.records:
        if r.sig not in current:
            continue
        current[r.sig] = r.v
        if r.t_ps == last_t:
            out[-1] = dict(current)
        else:
            out.append(dict(current))
            last_t = r.t_ps
    return out


def _atom(state, path, op, lit):
    v = state.get(path)
    if op in ("<", "<=", ">", ">="):
        nums = (int, float)
        if not isinstance(v, nums) or not isinstance(lit, nums) or isinstance(v, bool):
            return False
    return bool(_OPS[op](v, lit))


def _holds(n, seq, i):
    """Truth of ``n`` at position i of the finite state sequence."""
    k = n[0]
    if k == "const":
        return n[1]
    if k == "atom":
        return i < len(seq) and _atom(seq[i], n[1], n[2], n[3])
    if k == "not":
        return not _holds(n[1], seq, i)
    if k == "and":
        return _holds(n[1], seq, i) and _holds(n[2], seq, i)
    if k == "or":
        return _holds(n[1], seq, i) or _holds(n[2], seq, i)
    if k == "G":
        return all(_holds(n[1], seq, j) for j in range(i, len(seq)))
    if k == "F":
        return any(_holds(n[1], seq, j) for j in range(i, len(seq)))
    if k == "X":
        return i + 1 < len(seq) and _holds(n[1], seq, i + 1)
    if k == "U":
        for j in range(i, len(seq)):
            if _holds(n[2], seq, j):
                return True
            if not _holds(n[1], seq, j):
                return False
        return False
    raise ExprSyntaxError(f"bad query node {k}")


def check_query(trace, query, known_signals=None):
    """Evaluate a query at the first state of the trace.

    ``known_signals`` lists signals that exist even if the trace never
    records them; by default the trace's own signals plus the header's
    ``signals`` list.
    """
    q = parse_query(query)
    if known_signals is None:
        known_signals = set(trace.signals()) | set(trace.metadata.get("signals", ()))
    missing = sorted(s for s in q.signals() if s not in known_signals)
    if missing:
        raise UnknownSignalInQuery(f"query refers to unknown signal(s): {', '.join(missing)}")
    seq = states(trace, q.signals())
    return _holds(q.ast, seq, 0)
