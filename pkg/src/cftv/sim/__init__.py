from .kernel import (
    Binding,
    Entity,
    EntitySpec,
    Injectable,
    Simulation,
    SimulationConfig,
    Trace,
    TraceRecord,
    build_simulation,
    parse_path,
)
from .entities import REGISTRY

__all__ = [
    "Binding",
    "Entity",
    "EntitySpec",
    "Injectable",
    "REGISTRY",
    "Simulation",
    "SimulationConfig",
    "Trace",
    "TraceRecord",
    "build_simulation",
    "parse_path",
]
