"""Exact routing optima used as ground truth for the QUBO models."""

from __future__ import annotations

import itertools
from typing import Iterator

import numpy as np

from ..decode import ENCODERS, RouteSet, Tour, tour_length
from ..formulations import TSP_BUILDERS, VRP_BUILDERS, PenaltyWeights
from ..instances import RoutingInstance, VrpConfig
from ..qubo import ENERGY_TOL

TSP_DP_LIMIT = 12
TSP_BRUTE_LIMIT = 9
VRP_CITY_LIMIT = 8
VRP_VEHICLE_LIMIT = 3
SCAN_LIMIT = 7


def _held_karp(dist: np.ndarray, cities: list[int], end: int) -> tuple[float, list[int]]:
    """Shortest path ``0 -> all cities -> end`` visiting each city once."""
    m = len(cities)
    if m == 0:
        return float(dist[0, end]), []
    full = (1 << m) - 1
    cost = np.full((1 << m, m), np.inf)
    parent = np.full((1 << m, m), -1, dtype=np.int64)
    for k, c in enumerate(cities):
        cost[1 << k, k] = dist[0, c]
    for mask in range(1, 1 << m):
        for k in range(m):
            if not mask & (1 << k) or not np.isfinite(cost[mask, k]):
                continue
            base = cost[mask, k]
            for nxt in range(m):
                if mask & (1 << nxt):
                    continue
                nm = mask | (1 << nxt)
                val = base + dist[cities[k], cities[nxt]]
                if val < cost[nm, nxt]:
                    cost[nm, nxt] = val
                    parent[nm, nxt] = k
    finals = cost[full] + dist[cities, end]
    k = int(np.argmin(finals))
    best = float(finals[k])
    path = []
    mask = full
    while k != -1:
        path.append(cities[k])
        k, mask = int(parent[mask, k]), mask ^ (1 << k)
    return best, path[::-1]


def solve_tsp_oracle(instance: RoutingInstance, method: str = "auto") -> tuple[Tour, float]:
    """Exact shortest tour by subset dynamic programming or by permutations.

    ``method`` is ``"dp"`` (N <= 12), ``"brute"`` (N <= 9) or ``"auto"``
    (brute force up to 7 cities, dynamic programming above).
    """
    N = instance.n_cities
    if method == "auto":
        method = "brute" if N <= 7 else "dp"
    if method == "dp":
        if N > TSP_DP_LIMIT:
            raise ValueError(f"TSP oracle supports N <= {TSP_DP_LIMIT}, got {N}")
        length, cities = _held_karp(instance.dist, list(range(1, N)), N)
        tour = Tour.from_cities(cities, N)
        return tour, tour_length(tour, instance)
    if method == "brute":
        if N > TSP_BRUTE_LIMIT:
            raise ValueError(f"brute-force TSP oracle supports N <= {TSP_BRUTE_LIMIT}, got {N}")
        best = None
        best_len = np.inf
        for perm in itertools.permutations(range(1, N)):
            tour = Tour.from_cities(perm, N)
            length = tour_length(tour, instance)
            if length < best_len - 1e-12:
                best, best_len = tour, length
        return best, best_len
    raise ValueError(f"unknown method {method!r}")


def _subset_paths(instance: RoutingInstance) -> dict[int, tuple[float, tuple[int, ...]]]:
    """Shortest depot-to-depot path through every subset of cities (bitmask over 1..N-1)."""
    N = instance.n_cities
    out = {}
    for mask in range(1 << (N - 1)):
        cities = [c + 1 for c in range(N - 1) if mask >> c & 1]
        length, path = _held_karp(instance.dist, cities, N)
        out[mask] = (length, tuple(path))
    return out


def solve_vrp_oracle(config: VrpConfig) -> tuple[RouteSet, float]:
    """Exact min-max route length over every assignment of cities to vehicles.

    Routes come back sorted longest first, so vehicle 1 drives the longest
    route as the QUBO models require.
    """
    inst = config.instance
    N, Q = inst.n_cities, config.n_vehicles
    if N > VRP_CITY_LIMIT or Q > VRP_VEHICLE_LIMIT:
        raise ValueError(f"VRP oracle supports N <= {VRP_CITY_LIMIT} and Q <= {VRP_VEHICLE_LIMIT}")
    paths = _subset_paths(inst)
    best = None
    best_val = np.inf
    for labels in itertools.product(range(Q), repeat=N - 1):
        masks = [0] * Q
        for c, q in enumerate(labels):
            masks[q] |= 1 << c
        val = max(paths[m][0] for m in masks)
        if val < best_val - 1e-12:
            best, best_val = masks, val
    parts = sorted(((paths[m][0], paths[m][1]) for m in best), key=lambda p: (-p[0], p[1]))
    rs = RouteSet(tuple(p[1] for p in parts), N)
    return rs, best_val


def _ordered_route_sets(n_cities: int, n_vehicles: int) -> Iterator[tuple[tuple[int, ...], ...]]:
    """Every way to split cities ``1..N-1`` into ``Q`` ordered routes (vehicles labelled)."""
    cities = list(range(1, n_cities))
    for labels in itertools.product(range(n_vehicles), repeat=len(cities)):
        groups = [[c for c, q in zip(cities, labels) if q == v] for v in range(n_vehicles)]
        for orders in itertools.product(*(itertools.permutations(g) for g in groups)):
            yield tuple(orders)


def feasible_scan(formulation: str, problem: RoutingInstance | VrpConfig,
                  weights: PenaltyWeights | None = None, **build_kwargs):
    """Minimum-energy encoding over every valid tour (or route set).

    Returns ``(assignment, energy, solution, model, varmap)``. Energies are
    compared with :meth:`QuboModel.energy`; among values within ``ENERGY_TOL``
    of the minimum the first in enumeration order wins.
    """
    if formulation in TSP_BUILDERS:
        if not isinstance(problem, RoutingInstance):
            raise TypeError("TSP scan needs a RoutingInstance")
        inst = problem
        model, vm = TSP_BUILDERS[formulation](inst, weights, **build_kwargs)
        N = inst.n_cities
        candidates = (Tour.from_cities(p, N) for p in itertools.permutations(range(1, N)))
        encode = lambda s: ENCODERS[formulation](s, vm)
    elif formulation in VRP_BUILDERS:
        if not isinstance(problem, VrpConfig):
            raise TypeError("VRP scan needs a VrpConfig")
        inst = problem.instance
        model, vm = VRP_BUILDERS[formulation](problem, weights, **build_kwargs)
        N = inst.n_cities
        candidates = (RouteSet(r, N) for r in _ordered_route_sets(N, problem.n_vehicles))
        encode = lambda s: ENCODERS[formulation](s, vm)
    else:
        raise ValueError(f"unknown formulation {formulation!r}")
    if N > SCAN_LIMIT:
        raise ValueError(f"feasible scan supports N <= {SCAN_LIMIT}, got {N}")

    best = None
    for sol in candidates:
        a = encode(sol)
        e = model.energy(a)
        if best is None or e < best[1] - ENERGY_TOL:
            best = (a, e, sol)
    return best[0], best[1], best[2], model, vm
