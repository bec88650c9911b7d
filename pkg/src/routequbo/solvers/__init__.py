"""QUBO samplers and exact routing oracles."""

from .exhaustive import DEFAULT_VAR_LIMIT, solve_exhaustive
from .oracles import feasible_scan, solve_tsp_oracle, solve_vrp_oracle
from .sa import SaParams, SampleSet, beta_range, solve_sa

__all__ = [
    "DEFAULT_VAR_LIMIT",
    "SaParams",
    "SampleSet",
    "beta_range",
    "feasible_scan",
    "solve_exhaustive",
    "solve_sa",
    "solve_tsp_oracle",
    "solve_vrp_oracle",
]
