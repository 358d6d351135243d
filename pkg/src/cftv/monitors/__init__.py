"""Failure monitors: trace alignment, failure classification and trace queries."""

from .compare import (
    CLASSES,
    Classification,
    Evidence,
    FailureMonitor,
    Match,
    MonitorResult,
    align,
    classify,
    default_window,
    make_comparator,
    monitor_verdict,
)
from .ctl import TraceQuery, check_query, parse_query

__all__ = [
    "CLASSES",
    "Classification",
    "Evidence",
    "FailureMonitor",
    "Match",
    "MonitorResult",
    "TraceQuery",
    "align",
    "check_query",
    "classify",
    "default_window",
    "make_comparator",
    "monitor_verdict",
    "parse_query",
]
