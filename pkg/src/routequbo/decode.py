"""Encode routing solutions as bit assignments, decode them back, and report violations.

Decoders never raise on bad bitstrings: an infeasible assignment decodes to
``None``, because samplers emit those routinely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .formulations.varmap import UNUSED, VariableMap
from .instances import RoutingInstance
from .qubo import ENERGY_TOL, OBJECTIVE, QuboModel


@dataclass(frozen=True)
class Tour:
    """Node sequence from the start depot ``0`` to the end depot ``T - 1``."""

    order: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "order", tuple(int(v) for v in self.order))
        if len(self.order) < 2:
            raise ValueError("a tour needs at least the two depots")
        end = len(self.order) - 1
        if self.order[0] != 0 or self.order[-1] != end:
            raise ValueError(f"tour must run from 0 to {end}, got {self.order}")
        if sorted(self.order) != list(range(end + 1)):
            raise ValueError(f"tour is not a permutation: {self.order}")

    @classmethod
    def from_cities(cls, cities: Sequence[int], n_cities: int) -> "Tour":
        """Wrap the intermediate cities ``1..N-1`` with both depots."""
        return cls((0, *cities, n_cities))

    @property
    def cities(self) -> tuple[int, ...]:
        return self.order[1:-1]

    def arcs(self) -> list[tuple[int, int]]:
        return list(zip(self.order[:-1], self.order[1:]))


@dataclass(frozen=True)
class RouteSet:
    """One route per vehicle; each route is a list of intermediate cities.

    The full node sequence of vehicle ``q`` is ``0, *routes[q], end``. An idle
    vehicle has the empty route.
    """

    routes: tuple[tuple[int, ...], ...]
    end: int

    def __post_init__(self) -> None:
        routes = tuple(tuple(int(c) for c in r) for r in self.routes)
        object.__setattr__(self, "routes", routes)
        seen = sorted(c for r in routes for c in r)
        if seen != list(range(1, self.end)):
            raise ValueError(f"routes do not partition cities 1..{self.end - 1}: {routes}")

    @property
    def vehicle_count(self) -> int:
        return len(self.routes)

    def paths(self) -> list[tuple[int, ...]]:
        return [(0, *r, self.end) for r in self.routes]

    def canonical(self) -> tuple[tuple[int, ...], ...]:
        """Vehicle-order independent form, used to compare route sets."""
        return tuple(sorted(self.routes))


@dataclass
class ViolationReport:
    """Energy contribution of each tagged family at one assignment.

    ``residuals`` holds only constraint families; ``objective`` is the energy
    of the objective family. ``feasible`` is true when every residual is zero
    up to round-off.
    """

    residuals: dict[str, float]
    objective: float
    feasible: bool
    untagged: float = 0.0
    tolerance: float = field(default=ENERGY_TOL, repr=False)

    @property
    def total_penalty(self) -> float:
        return float(sum(self.residuals.values()))

    @property
    def violated(self) -> list[str]:
        return [k for k, v in self.residuals.items() if abs(v) > self.tolerance]

    def to_dict(self) -> dict:
        return {"feasible": self.feasible, "objective": self.objective, "residuals": dict(self.residuals)}


def _bits(varmap: VariableMap) -> np.ndarray:
    return np.zeros(varmap.n_vars, dtype=np.int8)


def _as_tour(tour: Tour | Sequence[int], n_nodes: int) -> Tour:
    t = tour if isinstance(tour, Tour) else Tour(tuple(tour))
    if len(t.order) != n_nodes:
        raise ValueError(f"tour has {len(t.order)} nodes, model expects {n_nodes}")
    return t


def _set(a: np.ndarray, block: np.ndarray, mask: np.ndarray) -> None:
    idx = block[mask]
    a[idx[idx != UNUSED]] = 1


def _require(varmap: VariableMap, *kinds: str) -> None:
    if varmap.kind not in kinds:
        raise ValueError(f"variable map of kind {varmap.kind!r}, expected {' or '.join(kinds)}")


def _check_length(a, varmap: VariableMap) -> np.ndarray:
    arr = np.asarray(a).astype(np.int8).ravel()
    if arr.size != varmap.n_vars:
        raise ValueError(f"assignment has {arr.size} bits, map has {varmap.n_vars}")
    return arr


# ---------------------------------------------------------------- encoders

def encode_gps(tour: Tour | Sequence[int], varmap: VariableMap) -> np.ndarray:
    """Arc slot for consecutive pairs, before/after slots for all other pairs."""
    _require(varmap, "gps")
    T = varmap.dims["n_nodes"]
    t = _as_tour(tour, T)
    pos = np.empty(T, dtype=np.int64)
    pos[list(t.order)] = np.arange(T)
    succ = np.full(T, -1)
    for i, j in t.arcs():
        succ[i] = j
    i, j = np.meshgrid(np.arange(T), np.arange(T), indexing="ij")
    off = i != j
    arc = off & (succ[i] == j)
    a = _bits(varmap)
    x = varmap["x"]
    _set(a, x[:, :, 1], arc)
    _set(a, x[:, :, 0], off & ~arc & (pos[i] < pos[j]))
    _set(a, x[:, :, 2], off & ~arc & (pos[i] > pos[j]))
    return a


def encode_native(tour: Tour | Sequence[int], varmap: VariableMap) -> np.ndarray:
    """Arc ``(tour[t], tour[t+1])`` at step ``t``."""
    _require(varmap, "native")
    t = _as_tour(tour, varmap.dims["n_nodes"])
    a = _bits(varmap)
    x = varmap["x"]
    for step, (u, v) in enumerate(t.arcs()):
        a[x[u, v, step]] = 1
    return a


def encode_mtz(tour: Tour | Sequence[int], varmap: VariableMap) -> np.ndarray:
    """Arc bits, binary visit positions, and the slack that closes each order inequality."""
    _require(varmap, "mtz")
    T = varmap.dims["n_nodes"]
    K = varmap.dims["order_bits"]
    t = _as_tour(tour, T)
    a = _bits(varmap)
    x, u, s = varmap["x"], varmap["u"], varmap["s"]
    arc = np.zeros((T, T), dtype=np.int64)
    for i, j in t.arcs():
        arc[i, j] = 1
        a[x[i, j]] = 1
    pos = np.empty(T, dtype=np.int64)
    pos[list(t.order)] = np.arange(T)
    for node in range(1, T):
        for b in range(K):
            a[u[node, b]] = (pos[node] >> b) & 1
    width = s.shape[2]
    for i in range(1, T):
        for j in range(1, T):
            if i == j:
                continue
            slack = (T - 1) - (pos[i] - pos[j] + T * arc[i, j])
            for h in range(width):
                a[s[i, j, h]] = (slack >> h) & 1
    return a


def encode_position(tour: Tour | Sequence[int], varmap: VariableMap) -> np.ndarray:
    _require(varmap, "position")
    t = _as_tour(tour, varmap.dims["n_nodes"])
    a = _bits(varmap)
    for p, node in enumerate(t.order):
        a[varmap["x"][node, p]] = 1
    return a


def _vrp_route_set(routes: RouteSet | Sequence[Sequence[int]], varmap: VariableMap) -> RouteSet:
    T = varmap.dims["n_nodes"]
    rs = routes if isinstance(routes, RouteSet) else RouteSet(tuple(tuple(r) for r in routes), T - 1)
    if rs.end != T - 1 or rs.vehicle_count != varmap.dims["n_vehicles"]:
        raise ValueError("route set does not match the variable map")
    return rs


def encode_vrp(routes: RouteSet | Sequence[Sequence[int]], varmap: VariableMap) -> np.ndarray:
    """Encode one route per vehicle.

    Precedence follows the concatenation ``0, route_1, route_2, ..., end``.
    Slack bits of vehicle ``q`` hold ``D_1 - D_q`` in integer distance units,
    so the encoding is penalty free only when vehicle 1 drives the longest
    route (otherwise the slack stays 0).
    """
    _require(varmap, "vrp5", "vrp3")
    rs = _vrp_route_set(routes, varmap)
    T = varmap.dims["n_nodes"]
    Q = varmap.dims["n_vehicles"]
    slots = varmap.dims["slots"]
    x, av, b = varmap["x"], varmap["a"], varmap["b"]
    order = [0] + [c for r in rs.routes for c in r] + [T - 1]
    gpos = np.empty(T, dtype=np.int64)
    gpos[order] = np.arange(T)
    i, j = np.meshgrid(np.arange(T), np.arange(T), indexing="ij")
    off = i != j
    before = gpos[i] < gpos[j]
    a = _bits(varmap)
    for q, path in enumerate(rs.paths()):
        member = np.zeros(T, dtype=bool)
        member[list(path)] = True
        both = member[i] & member[j]
        arc = np.zeros((T, T), dtype=bool)
        for u, v in zip(path[:-1], path[1:]):
            arc[u, v] = True
        rest = off & ~arc
        _set(a, x[:, :, 1, q], arc)
        if slots == 5:
            _set(a, x[:, :, 0, q], rest & both & before)
            _set(a, x[:, :, 2, q], rest & both & ~before)
            _set(a, x[:, :, 3, q], rest & ~both & before)
            _set(a, x[:, :, 4, q], rest & ~both & ~before)
        else:
            _set(a, x[:, :, 0, q], rest & before)
            _set(a, x[:, :, 2, q], rest & ~before)
    _set(a, av, off & before)
    if Q > 1:
        dist_int = np.asarray(varmap.dims["dist_int"], dtype=np.int64)
        lengths = [sum(int(dist_int[u, v]) for u, v in zip(p[:-1], p[1:])) for p in rs.paths()]
        for q in range(1, Q):
            slack = lengths[0] - lengths[q]
            if slack < 0:
                continue
            for h in range(b.shape[0]):
                a[b[h, q]] = (slack >> h) & 1
    return a


# ---------------------------------------------------------------- decoders
#
# Each decoder checks the same rules its model penalises, so a decoder
# returns a solution exactly when every penalty family is zero. Clamped
# bits are ignored.

def _grid(bits: np.ndarray, block: np.ndarray, clamped: frozenset[int]) -> np.ndarray:
    """Bit values laid out like ``block``; clamped and missing cells read as 0."""
    out = np.zeros(block.shape, dtype=np.int64)
    ok = block != UNUSED
    if clamped:
        ok &= ~np.isin(block, np.fromiter(clamped, dtype=np.int64))
    out[ok] = bits[block[ok]]
    return out


def _active(block: np.ndarray, clamped: frozenset[int]) -> np.ndarray:
    ok = block != UNUSED
    if clamped:
        ok &= ~np.isin(block, np.fromiter(clamped, dtype=np.int64))
    return ok


def _walk(arcs: np.ndarray, end: int, steps: int | None) -> list[int] | None:
    """Follow the unique successor from 0 to ``end`` using every set arc exactly once."""
    path = [0]
    seen = {0}
    while path[-1] != end:
        nxt = np.flatnonzero(arcs[path[-1]])
        if nxt.size != 1 or int(nxt[0]) in seen:
            return None
        path.append(int(nxt[0]))
        seen.add(path[-1])
    if steps is not None and len(path) - 1 != steps:
        return None
    if int(arcs.sum()) != len(path) - 1:
        return None
    return path


def _transitive(prec: np.ndarray, nodes: range) -> bool:
    """``prec[i, j] = 1`` means i comes before j; no triple may hit a penalised pattern."""
    idx = np.array(list(nodes))
    if idx.size < 3:
        return True
    p = prec[np.ix_(idx, idx)]
    a = p[:, :, None]
    b = p[None, :, :]
    c = p[:, None, :]
    val = a * b - a * c - b * c + c
    i, j, k = np.meshgrid(np.arange(idx.size), np.arange(idx.size), np.arange(idx.size), indexing="ij")
    distinct = (i != j) & (j != k) & (i != k)
    return not np.any(val[distinct])


def decode_gps(a, varmap: VariableMap) -> Tour | None:
    """Follow the arc slot from the start depot.

    The relation slots must also be consistent: one slot per ordered pair,
    opposite orientations agreeing on precedence, and no precedence cycle
    among cities.
    """
    _require(varmap, "gps")
    bits = _check_length(a, varmap)
    T = varmap.dims["n_nodes"]
    x = varmap["x"]
    g = _grid(bits, x, varmap.clamped)
    off = ~np.eye(T, dtype=bool)
    if np.any(g.sum(axis=2)[off] != 1):
        return None
    if np.any((g[:, :, 2] + g[:, :, 2].T)[off] != 1):
        return None
    if not _transitive(g[:, :, 2].T, range(1, T - 1)):
        return None
    path = _walk(g[:, :, 1], T - 1, T - 1)
    return None if path is None else Tour(tuple(path))


def decode_native(a, varmap: VariableMap) -> Tour | None:
    """Exactly one arc per step, chained head to tail from the start depot."""
    _require(varmap, "native")
    bits = _check_length(a, varmap)
    T = varmap.dims["n_nodes"]
    S = varmap.dims["time_steps"]
    g = _grid(bits, varmap["x"], varmap.clamped)
    path = [0]
    for t in range(S):
        on = np.argwhere(g[:, :, t])
        if len(on) != 1 or on[0][0] != path[-1]:
            return None
        path.append(int(on[0][1]))
    if path[-1] != T - 1 or len(set(path)) != T:
        return None
    return Tour(tuple(path))


def decode_mtz(a, varmap: VariableMap) -> Tour | None:
    """Arc successor walk; every order inequality must close with its slack bits."""
    _require(varmap, "mtz")
    bits = _check_length(a, varmap)
    T = varmap.dims["n_nodes"]
    K = varmap.dims["order_bits"]
    x = _grid(bits, varmap["x"], varmap.clamped)
    path = _walk(x, T - 1, T - 1)
    if path is None:
        return None
    u = _grid(bits, varmap["u"], varmap.clamped) @ (1 << np.arange(K))
    s = varmap["s"]
    slack = _grid(bits, s, varmap.clamped) @ (1 << np.arange(s.shape[2]))
    for i in range(1, T):
        for j in range(1, T):
            if i != j and u[i] - u[j] + T * x[i, j] + slack[i, j] != T - 1:
                return None
    return Tour(tuple(path))


def decode_position(a, varmap: VariableMap) -> Tour | None:
    """Read the permutation matrix column by column."""
    _require(varmap, "position")
    bits = _check_length(a, varmap)
    grid = _grid(bits, varmap["x"], varmap.clamped)
    if not (np.all(grid.sum(axis=0) == 1) and np.all(grid.sum(axis=1) == 1)):
        return None
    return Tour(tuple(int(v) for v in np.argmax(grid, axis=0)))


def decode_vrp(a, varmap: VariableMap) -> RouteSet | None:
    """Per-vehicle successor walk plus the shared-precedence and route-cap checks."""
    _require(varmap, "vrp5", "vrp3")
    bits = _check_length(a, varmap)
    T = varmap.dims["n_nodes"]
    E = T - 1
    Q = varmap.dims["n_vehicles"]
    before = (0, 1, 3) if varmap.dims["slots"] == 5 else (0, 1)
    x = _grid(bits, varmap["x"], varmap.clamped)
    off = ~np.eye(T, dtype=bool)
    act = _active(varmap["x"], varmap.clamped)
    has_slot = act.any(axis=2)
    if np.any((x.sum(axis=2) != 1) & has_slot):
        return None

    routes = []
    for q in range(Q):
        path = _walk(x[:, :, 1, q], E, None)
        if path is None:
            return None
        routes.append(tuple(path[1:-1]))
    try:
        rs = RouteSet(tuple(routes), E)
    except ValueError:
        return None

    prec = x[:, :, list(before), :].sum(axis=2)
    for q in range(Q):
        pq = prec[:, :, q]
        pair = pq + pq.T
        for i in range(E):
            for j in range(max(i + 1, 1), E):
                if pair[i, j] != 1:
                    return None
    shared = _grid(bits, varmap["a"], varmap.clamped)
    cities = range(1, E)
    for i in cities:
        for j in cities:
            if i != j and prec[i, j].sum() != Q * shared[i, j]:
                return None
    if not _transitive(shared, cities):
        return None

    if Q > 1:
        dint = np.asarray(varmap.dims["dist_int"], dtype=np.int64)
        arcs = x[:, :, 1, :]
        length = np.einsum("ij,ijq->q", dint, arcs)
        b = varmap["b"]
        slack = (1 << np.arange(b.shape[0])) @ _grid(bits, b, varmap.clamped)
        for q in range(1, Q):
            if length[q] - length[0] + slack[q] != 0:
                return None
    return rs


ENCODERS = {
    "gps": encode_gps,
    "native": encode_native,
    "mtz": encode_mtz,
    "position": encode_position,
    "vrp5": encode_vrp,
    "vrp3": encode_vrp,
}
DECODERS = {
    "gps": decode_gps,
    "native": decode_native,
    "mtz": decode_mtz,
    "position": decode_position,
    "vrp5": decode_vrp,
    "vrp3": decode_vrp,
}


def decode(a, varmap: VariableMap) -> Tour | RouteSet | None:
    return DECODERS[varmap.kind](a, varmap)


# ---------------------------------------------------------------- lengths and checks

def tour_length(tour: Tour | Sequence[int], instance: RoutingInstance) -> float:
    order = tour.order if isinstance(tour, Tour) else tuple(tour)
    d = instance.dist
    return float(sum(d[u, v] for u, v in zip(order[:-1], order[1:])))


def route_lengths(routes: RouteSet, instance: RoutingInstance) -> list[float]:
    return [tour_length(p, instance) for p in routes.paths()]


def max_route_length(routes: RouteSet, instance: RoutingInstance) -> float:
    return max(route_lengths(routes, instance))


def check_constraints(a, model: QuboModel, rtol: float = 1e-9) -> ViolationReport:
    """Split the energy of ``a`` by constraint family.

    A residual counts as zero when its magnitude is below ``rtol`` times the
    family's largest coefficient (at least ``ENERGY_TOL``).
    """
    tags = [t for t in model.families if t != OBJECTIVE]
    if not tags:
        raise ValueError("model carries no tagged constraint families")
    bits = np.asarray(a)
    residuals: dict[str, float] = {}
    feasible = True
    scale = 0.0
    for tag in tags:
        sub = model.family(tag)
        residuals[tag] = sub.energy(bits)
        lin = sub.linear_array()
        quad = sub.quadratic_arrays()[2]
        fam_scale = max(abs(sub.offset), float(np.abs(lin).max(initial=0.0)), float(np.abs(quad).max(initial=0.0)))
        scale = max(scale, fam_scale)
        if abs(residuals[tag]) > max(ENERGY_TOL, rtol * fam_scale):
            feasible = False
    objective = model.family(OBJECTIVE).energy(bits) if OBJECTIVE in model.families else 0.0
    untagged = model.energy(bits) - objective - sum(residuals.values())
    return ViolationReport(residuals, float(objective), feasible, float(untagged), max(ENERGY_TOL, rtol * scale))
