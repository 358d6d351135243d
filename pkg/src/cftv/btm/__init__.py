"""Behavioral threat models (timed automata driving fault injection)."""

from .automaton import (
    BtmDefinition,
    BtmInstance,
    Transition,
    load_btm,
    parse_btm,
    placeholders_in,
    substitute,
)
from .expr import evaluate, parse_actions, parse_guard

__all__ = [
    "BtmDefinition",
    "BtmInstance",
    "Transition",
    "evaluate",
    "load_btm",
    "parse_actions",
    "parse_btm",
    "parse_guard",
    "placeholders_in",
    "substitute",
]
