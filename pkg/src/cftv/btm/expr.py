"""Guard and action expressions for behavioral threat models.

Guards::

    guard   := or
    or      := and ("||" and)*
    and     := unary ("&&" unary)*
    unary   := "!" unary | cmp
    cmp     := sum (("=="|"!="|"<"|"<="|">"|">=") sum)?
    sum     := prod (("+"|"-") prod)*
    prod    := atom (("*"|"/") atom)*
    atom    := literal | clock(name) | var(path) | local(name) | event(name)
             | "(" or ")" | "-" atom
    literal := int | hex | real | time ("23 s", "10 ms") | "string" | true | false | null | inf

Actions: ``force(path, expr)``, ``release(path)``, ``set(name, expr)``,
``reset(name)``, ``emit(name)``; several may be joined with ``;``.
Paths accept ``[i]``, ``[i:j]`` and ``[i:j:k]`` selectors.
"""

from __future__ import annotations

import operator
import re

import numpy as np

from ..errors import ExprSyntaxError, ExprTypeError
from ..timeunits import TIME_INF, UNITS

_NUMBER = re.compile(r"0[xX][0-9a-fA-F]+|\d+\.\d+|\d+")
_UNIT = re.compile(r"\s*(ps|ns|us|ms|s)\b")
_IDENT = re.compile(r"[A-Za-z_]\w*")
_PATH = re.compile(r"[A-Za-z_][\w.\-]*(?:\[[^\]]*\])?")
_STRING = re.compile(r'"((?:[^"\\]|\\.)*)"|\'((?:[^\'\\]|\\.)*)\'')
_OPS = ("&&", "||", "==", "!=", "<=", ">=", "<", ">", "!", "+", "-", "*", "/", "(", ")", ",", ";")

_CMP = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}
_ARITH = {"+": operator.add, "-": operator.sub, "*": operator.mul, "/": operator.truediv}

PATH_FUNCS = ("var",)
NAME_FUNCS = ("clock", "local", "event")


class _Parser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    # -- lexing helpers -----------------------------------------------------
    def _skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self, tok):
        self._skip()
        return self.text.startswith(tok, self.pos)

    def accept(self, tok):
        if self.peek(tok):
            # keep "<" from swallowing "<=" etc.
            if tok in ("<", ">", "!", "=") and self.text[self.pos + 1 : self.pos + 2] == "=":
                return False
            if tok in ("&", "|"):
                return False
            self.pos += len(tok)
            return True
        return False

    def expect(self, tok):
        if not self.accept(tok):
            raise self.error(f"expected {tok!r}")

    def error(self, msg):
        return ExprSyntaxError(f"{msg} at column {self.pos} in {self.text!r}")

    def at_end(self):
        self._skip()
        return self.pos >= len(self.text)

    def ident(self):
        self._skip()
        m = _IDENT.match(self.text, self.pos)
        if not m:
            raise self.error("expected a name")
        self.pos = m.end()
        return m.group(0)

    def path(self):
        self._skip()
        m = _PATH.match(self.text, self.pos)
        if not m:
            raise self.error("expected a signal path")
        self.pos = m.end()
        return m.group(0)

    # -- grammar ------------------------------------------------------------
    def expr(self):
        node = self.conj()
        while self.accept("||"):
            node = ("or", node, self.conj())
        return node

    def conj(self):
        node = self.unary()
        while self.accept("&&"):
            node = ("and", node, self.unary())
        return node

    def unary(self):
        if self.accept("!"):
            return ("not", self.unary())
        return self.comparison()

    def comparison(self):
        left = self.sum()
        for op in ("==", "!=", "<=", ">=", "<", ">"):
            if self.accept(op):
                return ("cmp", op, left, self.sum())
        return left

    def sum(self):
        node = self.product()
        while True:
            if self.accept("+"):
                node = ("arith", "+", node, self.product())
            elif self.accept("-"):
                node = ("arith", "-", node, self.product())
            else:
                return node

    def product(self):
        node = self.atom()
        while True:
            if self.accept("*"):
                node = ("arith", "*", node, self.atom())
            elif self.accept("/"):
                node = ("arith", "/", node, self.atom())
            else:
                return node

    def atom(self):
        self._skip()
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        if self.accept("-"):
            return ("neg", self.atom())
        m = _STRING.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            raw = m.group(1) if m.group(1) is not None else m.group(2)
            return ("lit", bytes(raw, "utf-8").decode("unicode_escape"))
        m = _NUMBER.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            tok = m.group(0)
            unit = _UNIT.match(self.text, self.pos)
            if unit and not tok.lower().startswith("0x"):
                self.pos = unit.end()
                scale = UNITS[unit.group(1)]
                if "." in tok:
                    whole, frac = tok.split(".")
                    num = int(whole) * scale * 10 ** len(frac) + int(frac) * scale
                    if num % 10 ** len(frac):
                        raise self.error("time literal below picosecond resolution")
                    return ("lit", num // 10 ** len(frac))
                return ("lit", int(tok) * scale)
            if tok.lower().startswith("0x"):
                return ("lit", int(tok, 16))
            return ("lit", float(tok) if "." in tok else int(tok))
        name = self.ident()
        if name == "true":
            return ("lit", True)
        if name == "false":
            return ("lit", False)
        if name == "null":
            return ("lit", None)
        if name == "inf":
            return ("lit", TIME_INF)
        if name in PATH_FUNCS:
            self.expect("(")
            p = self.path()
            self.expect(")")
            return (name, p)
        if name in NAME_FUNCS:
            self.expect("(")
            n = self.ident()
            self.expect(")")
            return (name, n)
        raise self.error(f"unknown name {name!r}")


def parse_guard(text):
    """Parse a guard; an empty guard is always true."""
    if text is None or not str(text).strip():
        return ("lit", True)
    p = _Parser(str(text))
    node = p.expr()
    if not p.at_end():
        raise p.error("unexpected trailing input")
    return node


def parse_actions(text):
    """Parse ``"release(p); force(p, 0x00)"`` into a list of action tuples."""
    p = _Parser(str(text))
    actions = []
    while not p.at_end():
        verb = p.ident()
        p.expect("(")
        if verb == "force":
            target = p.path()
            p.expect(",")
            actions.append(("force", target, p.expr()))
        elif verb == "release":
            actions.append(("release", p.path()))
        elif verb == "set":
            name = p.ident()
            p.expect(",")
            actions.append(("set", name, p.expr()))
        elif verb in ("reset", "emit"):
            actions.append((verb, p.ident()))
        else:
            raise p.error(f"unknown action {verb!r}")
        p.expect(")")
        if not p.at_end():
            p.expect(";")
    return actions


def walk(node):
    yield node
    for child in node[1:]:
        if isinstance(child, tuple):
            yield from walk(child)


def names_used(node, kind):
    return {n[1] for n in walk(node) if n[0] == kind}


def _truth(value):
    if isinstance(value, np.ndarray):
        return bool(value.all())
    return bool(value)


def evaluate(node, env):
    """Evaluate an expression.  ``env`` supplies clock/var/local/event lookups."""
    kind = node[0]
    if kind == "lit":
        return node[1]
    if kind == "clock":
        return env.clock(node[1])
    if kind == "var":
        return env.var(node[1])
    if kind == "local":
        return env.local(node[1])
    if kind == "event":
        return env.event(node[1])
    if kind == "not":
        return not _truth(evaluate(node[1], env))
    if kind == "and":
        return _truth(evaluate(node[1], env)) and _truth(evaluate(node[2], env))
    if kind == "or":
        return _truth(evaluate(node[1], env)) or _truth(evaluate(node[2], env))
    if kind == "neg":
        return -_number(evaluate(node[1], env))
    if kind == "arith":
        a, b = _number(evaluate(node[2], env)), _number(evaluate(node[3], env))
        if node[1] == "/" and isinstance(a, int) and isinstance(b, int) and not isinstance(a, bool):
            if b == 0:
                raise ExprTypeError("division by zero")
            return a // b
        return _ARITH[node[1]](a, b)
    if kind == "cmp":
        a, b = evaluate(node[2], env), evaluate(node[3], env)
        op = node[1]
        if op in ("<", "<=", ">", ">="):
            _number(a)
            _number(b)
        elif isinstance(a, str) != isinstance(b, str) and a is not None and b is not None:
            return op == "!="
        result = _CMP[op](a, b)
        return _truth(result)
    raise ExprTypeError(f"unknown expression node {kind}")


def _number(v):
    if isinstance(v, np.ndarray):
        if v.dtype.kind not in "iuf":
            raise ExprTypeError("non-numeric array")
        return v
    if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
        raise ExprTypeError(f"expected a number, got {v!r}")
    return v
