"""Penalty weights for the routing formulations."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace

from ..instances import RoutingInstance

HARD_FIELDS = (
    "one_hot",
    "degree",
    "order",
    "transitivity",
    "subtour",
    "continuity",
    "coupling",
    "route_cap",
)


@dataclass(frozen=True)
class PenaltyWeights:
    """One multiplier per constraint family plus the objective scale.

    ``one_hot``
        exactly-one rules: relation slots, visit positions, time steps.
    ``degree``
        leave-once / arrive-once, including depot departures and returns.
    ``order``
        precedence antisymmetry between the two orientations of a pair.
    ``transitivity``
        the cubic-free cycle penalty on precedence triples.
    ``subtour``
        native time-chaining rule and MTZ order inequalities.
    ``continuity``
        a vehicle entering a city must leave it.
    ``coupling``
        per-vehicle precedence slots agree with the shared precedence bit.
    ``route_cap``
        no vehicle drives farther than vehicle 1 (weight per squared integer unit).
    """

    one_hot: float = 1.0
    degree: float = 1.0
    order: float = 1.0
    transitivity: float = 1.0
    subtour: float = 1.0
    continuity: float = 1.0
    coupling: float = 1.0
    route_cap: float = 1.0
    objective: float = 1.0

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"weight {f.name} must be positive and finite, got {v!r}")

    def hard(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in HARD_FIELDS}

    def with_overrides(self, **overrides: float) -> "PenaltyWeights":
        unknown = set(overrides) - {f.name for f in fields(self)}
        if unknown:
            raise ValueError(f"unknown weight names: {sorted(unknown)}")
        return replace(self, **{k: float(v) for k, v in overrides.items()})

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def uniform(cls, value: float, objective: float = 1.0) -> "PenaltyWeights":
        return cls(**{k: value for k in HARD_FIELDS}, objective=objective)


def default_weights(instance: RoutingInstance, formulation: str = "gps", margin: float = 0.25) -> PenaltyWeights:
    """Every hard weight at ``(1 + margin)`` times an upper bound on any route length.

    A single violated penalty then costs more than the whole objective of any
    feasible solution. The bound is the sum over nodes of the longest
    outgoing distance; it does not depend on the formulation, which is
    accepted for symmetry with the builders.
    """
    if margin < 0:
        raise ValueError("margin must be non-negative")
    bound = instance.length_upper_bound()
    return PenaltyWeights.uniform((1.0 + margin) * max(bound, 1e-12))


def edge_weights(instance: RoutingInstance, margin: float = 0.25) -> PenaltyWeights:
    """Every hard weight at ``(1 + margin)`` times the longest single arc.

    Much softer than :func:`default_weights`. The lower penalty barriers let
    single-flip annealing still feel the objective. Feasibility of the ground state is not guaranteed, so samples
    must be checked.
    """
    if margin < 0:
        raise ValueError("margin must be non-negative")
    return PenaltyWeights.uniform((1.0 + margin) * max(float(instance.dist.max()), 1e-12))


WEIGHT_PRESETS = {"bound": default_weights, "edge": edge_weights}


def preset_weights(instance: RoutingInstance, preset: str = "bound", margin: float = 0.25) -> PenaltyWeights:
    if preset == "bound":
        return default_weights(instance, margin=margin)
    if preset == "edge":
        return edge_weights(instance, margin=margin)
    raise ValueError(f"unknown weight preset {preset!r}; choose from {sorted(WEIGHT_PRESETS)}")


def parse_weights(text: str | None, base: PenaltyWeights) -> PenaltyWeights:
    """Overlay inline JSON (or a JSON file path) onto ``base``."""
    if not text:
        return base
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        with open(text, encoding="utf-8") as fh:
            data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("weights must be a JSON object")
    return base.with_overrides(**data)
