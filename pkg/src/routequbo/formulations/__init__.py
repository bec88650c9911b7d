"""QUBO builders for routing problems and their variable maps."""

from .common import add_transitivity, ordered_triples, transitivity_penalty, transitivity_value
from .tsp import build_gps_tsp, build_mtz_tsp, build_native_tsp, build_position_tsp
from .varmap import UNUSED, VariableMap, load_varmap, save_varmap
from .vrp import build_vrp3, build_vrp5, route_cap_bound
from .weights import WEIGHT_PRESETS, PenaltyWeights, default_weights, edge_weights, parse_weights, preset_weights

TSP_BUILDERS = {
    "gps": build_gps_tsp,
    "native": build_native_tsp,
    "mtz": build_mtz_tsp,
    "position": build_position_tsp,
}
VRP_BUILDERS = {
    "vrp5": build_vrp5,
    "vrp3": build_vrp3,
}
FORMULATIONS = tuple(TSP_BUILDERS) + tuple(VRP_BUILDERS)

__all__ = [
    "FORMULATIONS",
    "PenaltyWeights",
    "TSP_BUILDERS",
    "UNUSED",
    "VRP_BUILDERS",
    "WEIGHT_PRESETS",
    "VariableMap",
    "add_transitivity",
    "build_gps_tsp",
    "build_mtz_tsp",
    "build_native_tsp",
    "build_position_tsp",
    "build_vrp3",
    "build_vrp5",
    "default_weights",
    "edge_weights",
    "load_varmap",
    "ordered_triples",
    "parse_weights",
    "preset_weights",
    "route_cap_bound",
    "save_varmap",
    "transitivity_penalty",
    "transitivity_value",
]
