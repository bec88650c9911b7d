"""QUBO builders for the single-salesman formulations.

All builders work on the ``T = N + 1`` node grid of :mod:`routequbo.instances`
(start depot ``0``, end depot ``E = T - 1``). Grid cells that can never be 1
in a tour (self loops, arcs into the start depot, arcs out of the end depot)
are allocated so the variable counts cover the full grid, but they are
clamped to 0 and left out of every term.
"""

from __future__ import annotations

import numpy as np

from ..instances import RoutingInstance
from ..qubo import OBJECTIVE, LinearExpr, QuboModel, add_inequality_penalty
from .common import add_exactly, add_transitivity, ordered_triples
from .varmap import UNUSED, VariableMap, _Allocator
from .weights import PenaltyWeights, default_weights

ONE_HOT = "one_hot"
LEAVE = "leave_once"
ARRIVE = "arrive_once"
ORDER = "order"
TRANSITIVITY = "transitivity"
TIME_ONE_HOT = "time_one_hot"
SUBTOUR = "subtour"
MTZ_ORDER = "mtz_order"
POSITION_ROWS = "node_one_position"
POSITION_COLS = "position_one_node"


def _arc_mask(T: int) -> np.ndarray:
    """Usable directed arcs: no loops, nothing into 0, nothing out of T-1."""
    m = ~np.eye(T, dtype=bool)
    m[:, 0] = False
    m[T - 1, :] = False
    return m


def _clamp(block: np.ndarray, mask: np.ndarray) -> set[int]:
    return {int(v) for v in block[mask].ravel() if v != UNUSED}


def _add_objective_arcs(model: QuboModel, idx: np.ndarray, dist: np.ndarray, scale: float) -> None:
    keep = idx != UNUSED
    model.add_linear_terms(idx[keep], scale * dist[keep], OBJECTIVE)


def build_gps_tsp(instance: RoutingInstance, weights: PenaltyWeights | None = None) -> tuple[QuboModel, VariableMap]:
    """Three relation slots per ordered node pair.

    ``x[i, j, 0]``: arc (i, j) unused and i comes before j;
    ``x[i, j, 1]``: arc (i, j) is travelled (so i comes before j);
    ``x[i, j, 2]``: arc (i, j) unused and j comes before i.
    """
    w = weights or default_weights(instance, "gps")
    T = instance.n_nodes
    E = T - 1
    alloc = _Allocator()
    x = alloc.block("x", (T, T, 3))
    arcs = _arc_mask(T)
    clamp = _clamp(x, np.repeat(np.eye(T, dtype=bool)[:, :, None], 3, axis=2))
    clamp |= _clamp(x[:, :, 1], ~arcs)
    model = QuboModel(alloc.next)

    edge = np.where(arcs, x[:, :, 1], UNUSED)
    _add_objective_arcs(model, edge, instance.dist, w.objective)

    for i in range(T):
        for j in range(T):
            if i != j:
                add_exactly(model, [x[i, j, r] for r in range(3) if x[i, j, r] not in clamp], w.one_hot, ONE_HOT)
    for i in range(E):
        add_exactly(model, edge[i, 1:], w.degree, LEAVE)
    for j in range(1, T):
        add_exactly(model, edge[:E, j], w.degree, ARRIVE)
    for i in range(T):
        for j in range(i + 1, T):
            add_exactly(model, [x[i, j, 2], x[j, i, 2]], w.order, ORDER)

    tri = ordered_triples(range(1, E))
    if tri.size:
        i, j, k = tri.T
        add_transitivity(model, x[j, i, 2], x[k, j, 2], x[k, i, 2], w.transitivity, TRANSITIVITY)

    vm = VariableMap("gps", {"n_nodes": T, "n_cities": instance.n_cities}, alloc.blocks, frozenset(clamp))
    return model.freeze(), vm


def build_native_tsp(
    instance: RoutingInstance,
    weights: PenaltyWeights | None = None,
    subtour_variant: str = "B",
) -> tuple[QuboModel, VariableMap]:
    """Time-indexed arcs ``x[u, v, t]``: arc (u, v) is travelled at step t.

    Variant ``"A"`` forbids re-entering a city after leaving it (many more
    quadratic pairs); variant ``"B"`` requires that a city entered at step
    t is left at step t + 1. Both add a one-arc-per-step rule, and arcs out
    of the start depot (into the end depot) exist only at the first (last)
    step, so the walk cannot finish early and leave a detached cycle.
    """
    variant = subtour_variant.upper()
    if variant not in ("A", "B"):
        raise ValueError("subtour_variant must be 'A' or 'B'")
    w = weights or default_weights(instance, "native")
    T = instance.n_nodes
    E = T - 1
    S = instance.n_cities
    alloc = _Allocator()
    x = alloc.block("x", (T, T, S))
    arcs = np.repeat(_arc_mask(T)[:, :, None], S, axis=2)
    # the depots can only be left at the first step and reached at the last
    arcs[0, :, 1:] = False
    arcs[:, E, :-1] = False
    clamp = _clamp(x, ~arcs)
    xa = np.where(arcs, x, UNUSED)
    model = QuboModel(alloc.next)

    _add_objective_arcs(model, xa, np.repeat(instance.dist[:, :, None], S, axis=2), w.objective)
    for u in range(E):
        add_exactly(model, xa[u, 1:, :].ravel(), w.degree, LEAVE)
    for v in range(1, T):
        add_exactly(model, xa[:E, v, :].ravel(), w.degree, ARRIVE)
    for t in range(S):
        add_exactly(model, xa[:, :, t].ravel(), w.one_hot, TIME_ONE_HOT)

    if variant == "B":
        # x[u,v,t] * (1 - sum_k x[v,k,t+1]) for non-terminal v
        u, v, k, t = np.meshgrid(np.arange(T), np.arange(1, E), np.arange(T), np.arange(S - 1), indexing="ij")
        first = xa[u, v, t]
        second = xa[v, k, t + 1]
        ok = (first != UNUSED) & (second != UNUSED)
        model.add_quadratic_terms(first[ok], second[ok], -w.subtour, SUBTOUR)
        u, v, t = np.meshgrid(np.arange(T), np.arange(1, E), np.arange(S - 1), indexing="ij")
        lin = xa[u, v, t]
        model.add_linear_terms(lin[lin != UNUSED], w.subtour, SUBTOUR)
    else:
        # leaving u at t and entering u again at a later step j
        t, j = np.triu_indices(S, 1)
        u, v, q = np.meshgrid(np.arange(1, E), np.arange(T), np.arange(T), indexing="ij")
        out_arc = np.broadcast_to(xa[u, v][..., t], u.shape + (t.size,))
        in_arc = np.broadcast_to(xa[q, u][..., j], u.shape + (t.size,))
        ok = (out_arc != UNUSED) & (in_arc != UNUSED)
        model.add_quadratic_terms(out_arc[ok], in_arc[ok], w.subtour, SUBTOUR)

    dims = {"n_nodes": T, "n_cities": instance.n_cities, "time_steps": S, "variant": variant}
    return model.freeze(), VariableMap("native", dims, alloc.blocks, frozenset(clamp))


def order_bits(n_nodes: int) -> int:
    """Bits for a visit position in ``0..n_nodes-1``."""
    return max(1, (n_nodes - 1).bit_length())


def build_mtz_tsp(instance: RoutingInstance, weights: PenaltyWeights | None = None) -> tuple[QuboModel, VariableMap]:
    """Arc bits ``x[i, j]`` plus binary visit positions ``u[i, b]``.

    Every ordered pair of non-start nodes carries the order inequality
    ``u_i - u_j + T * x_ij <= T - 1`` through its own slack bits.
    """
    w = weights or default_weights(instance, "mtz")
    T = instance.n_nodes
    E = T - 1
    K = order_bits(T)
    powers = 2 ** np.arange(K)
    pair_mask = ~np.eye(T, dtype=bool)
    pair_mask[0, :] = False
    pair_mask[:, 0] = False
    # slack range: bound - min(u_i - u_j) = (T - 1) + (2^K - 1)
    width = ((T - 1) + (2**K - 1)).bit_length()

    alloc = _Allocator()
    x = alloc.block("x", (T, T))
    u = alloc.block("u", (T, K))
    s = alloc.block("s", (T, T, width), np.repeat(pair_mask[:, :, None], width, axis=2))
    arcs = _arc_mask(T)
    clamp = _clamp(x, ~arcs) | _clamp(u, np.arange(T)[:, None].repeat(K, 1) == 0)
    xa = np.where(arcs, x, UNUSED)
    model = QuboModel(alloc.next)

    _add_objective_arcs(model, xa, instance.dist, w.objective)
    for i in range(E):
        add_exactly(model, xa[i, 1:], w.degree, LEAVE)
    for j in range(1, T):
        add_exactly(model, xa[:E, j], w.degree, ARRIVE)
    for i in range(1, T):
        for j in range(1, T):
            if i == j:
                continue
            terms = {int(u[i, b]): float(powers[b]) for b in range(K)}
            for b in range(K):
                terms[int(u[j, b])] = terms.get(int(u[j, b]), 0.0) - float(powers[b])
            if xa[i, j] != UNUSED:
                terms[int(xa[i, j])] = float(T)
            slack = [int(v) for v in s[i, j]]
            add_inequality_penalty(
                model, LinearExpr(terms), T - 1, w.subtour,
                slack_alloc=lambda k, slack=slack: slack[:k], tag=MTZ_ORDER,
            )

    dims = {"n_nodes": T, "n_cities": instance.n_cities, "order_bits": K, "slack_bits": width}
    return model.freeze(), VariableMap("mtz", dims, alloc.blocks, frozenset(clamp))


def build_position_tsp(instance: RoutingInstance, weights: PenaltyWeights | None = None) -> tuple[QuboModel, VariableMap]:
    """``x[i, t] = 1`` when node i is visited at position t; quadratic distance objective."""
    w = weights or default_weights(instance, "position")
    T = instance.n_nodes
    E = T - 1
    alloc = _Allocator()
    x = alloc.block("x", (T, T))
    allowed = np.zeros((T, T), dtype=bool)
    allowed[1:E, 1:E] = True
    allowed[0, 0] = True
    allowed[E, E] = True
    clamp = _clamp(x, ~allowed)
    xa = np.where(allowed, x, UNUSED)
    model = QuboModel(alloc.next)

    i, j, t = np.meshgrid(np.arange(T), np.arange(T), np.arange(T - 1), indexing="ij")
    a = xa[i, t]
    b = xa[j, t + 1]
    ok = (a != UNUSED) & (b != UNUSED) & (i != j)
    coef = w.objective * instance.dist[i, j]
    ok &= coef != 0
    model.add_quadratic_terms(a[ok], b[ok], coef[ok], OBJECTIVE)
    for node in range(T):
        add_exactly(model, xa[node, :], w.one_hot, POSITION_ROWS)
    for pos in range(T):
        add_exactly(model, xa[:, pos], w.one_hot, POSITION_COLS)

    dims = {"n_nodes": T, "n_cities": instance.n_cities}
    return model.freeze(), VariableMap("position", dims, alloc.blocks, frozenset(clamp))
