"""Crash-dump triage for TinyASM programs.

Enumerates the feasible execution paths that lead to an illegal memory
reference and ranks them by the posterior probability that each one
harbors the root error.
"""
from .isa import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
