"""Verification of component fault trees by error effect simulation."""

__version__ = "0.1.0"
