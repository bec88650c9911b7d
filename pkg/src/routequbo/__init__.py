"""Build, solve and decode QUBO formulations of routing problems."""

__version__ = "0.1.0"
