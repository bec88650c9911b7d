"""Min-max vehicle routing builders derived from the GPS relation slots.

Five-slot variables ``x[i, j, r, q]`` for vehicle ``q``:

====  =====================================================
r     meaning
====  =====================================================
0     q visits i and j, arc (i, j) unused, i before j
1     q travels arc (i, j)
2     q visits i and j, j before i
3     q does not visit both, i before j
4     q does not visit both, j before i
====  =====================================================

The three-slot variant keeps 0 ("i before j, arc unused"), 1 (arc travelled)
and 2 ("j before i, arc unused"). Precedence between cities is shared by all
vehicles through the auxiliary bits ``a[i, j]``. Vehicle 1 (index 0) is
forced to drive the longest route and only its distance is minimised.
"""

from __future__ import annotations

import numpy as np

from ..instances import VrpConfig
from ..qubo import OBJECTIVE, LinearExpr, QuboModel, add_equality_penalty, add_inequality_penalty, slack_width
from .common import add_exactly, add_transitivity, ordered_triples
from .tsp import LEAVE, ARRIVE, ONE_HOT, ORDER, TRANSITIVITY, _arc_mask, _clamp
from .varmap import UNUSED, VariableMap, _Allocator
from .weights import PenaltyWeights, default_weights

DEPART = "depart_depot"
RETURN = "return_depot"
COUPLING = "coupling"
CONTINUITY = "continuity"
ROUTE_CAP = "route_cap"

BEFORE_SLOTS = {5: (0, 1, 3), 3: (0, 1)}


def route_cap_bound(config: VrpConfig) -> int:
    """Integer bound on any route length: sum over nodes of the longest arc."""
    return int(config.instance.int_dist().max(axis=1).sum())


def _build_vrp(config: VrpConfig, weights: PenaltyWeights | None, slots: int, cap_mode: str) -> tuple[QuboModel, VariableMap]:
    if cap_mode != "vehicle1-dominates":
        raise ValueError(f"unsupported cap mode {cap_mode!r}")
    inst = config.instance
    Q = config.n_vehicles
    w = weights or default_weights(inst, f"vrp{slots}")
    T = inst.n_nodes
    E = T - 1
    before = BEFORE_SLOTS[slots]
    dint = inst.int_dist()
    dmax = route_cap_bound(config)
    width = slack_width(dmax) if Q > 1 else 0

    alloc = _Allocator()
    x = alloc.block("x", (T, T, slots, Q))
    a_mask = np.zeros((T, T), dtype=bool)
    a_mask[1:E, 1:E] = ~np.eye(E - 1, dtype=bool)
    a = alloc.block("a", (T, T), a_mask)
    b_mask = np.zeros((width, Q), dtype=bool)
    b_mask[:, 1:] = True
    b = alloc.block("b", (width, Q), b_mask)

    arcs = _arc_mask(T)
    diag = np.broadcast_to(np.eye(T, dtype=bool)[:, :, None, None], x.shape)
    clamp = _clamp(x, diag) | _clamp(x[:, :, 1, :], np.broadcast_to(~arcs[:, :, None], (T, T, Q)))
    edge = np.where(arcs[:, :, None], x[:, :, 1, :], UNUSED)
    model = QuboModel(alloc.next)

    obj = edge[:, :, 0]
    keep = obj != UNUSED
    model.add_linear_terms(obj[keep], w.objective * inst.dist[keep], OBJECTIVE)

    def active(i: int, j: int, r: int, q: int) -> int:
        v = int(x[i, j, r, q])
        return UNUSED if v in clamp else v

    for q in range(Q):
        for i in range(T):
            for j in range(T):
                if i != j:
                    add_exactly(model, [active(i, j, r, q) for r in range(slots)], w.one_hot, ONE_HOT)
        add_exactly(model, edge[0, 1:, q], w.degree, DEPART)
        add_exactly(model, edge[:E, E, q], w.degree, RETURN)
    for c in range(1, E):
        add_exactly(model, edge[c, 1:, :].ravel(), w.degree, LEAVE)
        add_exactly(model, edge[:E, c, :].ravel(), w.degree, ARRIVE)

    for i in range(1, E):
        for j in range(1, E):
            if i == j:
                continue
            terms = {int(x[i, j, r, q]): 1.0 for r in before for q in range(Q) if int(x[i, j, r, q]) not in clamp}
            terms[int(a[i, j])] = -float(Q)
            add_equality_penalty(model, LinearExpr(terms), w.coupling, COUPLING)

    # x[i,j,1,q] * (1 - sum_k x[j,k,1,q]) for every city j
    i, j, k, q = np.meshgrid(np.arange(E), np.arange(1, E), np.arange(T), np.arange(Q), indexing="ij")
    first = edge[i, j, q]
    second = edge[j, k, q]
    ok = (first != UNUSED) & (second != UNUSED)
    model.add_quadratic_terms(first[ok], second[ok], -w.continuity, CONTINUITY)
    lin = edge[:E, 1:E, :]
    model.add_linear_terms(lin[lin != UNUSED], w.continuity, CONTINUITY)

    for q in range(Q):
        for i in range(E):
            for j in range(max(i + 1, 1), E):
                idx = [active(i, j, r, q) for r in before] + [active(j, i, r, q) for r in before]
                add_exactly(model, idx, w.order, ORDER)

    tri = ordered_triples(range(1, E))
    if tri.size:
        ti, tj, tk = tri.T
        add_transitivity(model, a[ti, tj], a[tj, tk], a[ti, tk], w.transitivity, TRANSITIVITY)

    for q in range(1, Q):
        terms: dict[int, float] = {}
        for (i, j) in zip(*np.nonzero(arcs)):
            if dint[i, j]:
                terms[int(edge[i, j, q])] = float(dint[i, j])
                terms[int(edge[i, j, 0])] = -float(dint[i, j])
        slack = [int(v) for v in b[:, q]]
        add_inequality_penalty(
            model, LinearExpr(terms), 0, w.route_cap,
            slack_alloc=lambda n, slack=slack: slack[:n], max_gap=dmax, tag=ROUTE_CAP,
        )

    dims = {
        "n_nodes": T,
        "n_cities": inst.n_cities,
        "n_vehicles": Q,
        "slots": slots,
        "slack_bits": width,
        "scale": inst.scale,
        "cap_mode": cap_mode,
        "dist_int": dint.tolist(),
    }
    return model.freeze(), VariableMap(f"vrp{slots}", dims, alloc.blocks, frozenset(clamp))


def build_vrp5(config: VrpConfig, weights: PenaltyWeights | None = None,
               cap_mode: str = "vehicle1-dominates") -> tuple[QuboModel, VariableMap]:
    return _build_vrp(config, weights, 5, cap_mode)


def build_vrp3(config: VrpConfig, weights: PenaltyWeights | None = None,
               cap_mode: str = "vehicle1-dominates") -> tuple[QuboModel, VariableMap]:
    return _build_vrp(config, weights, 3, cap_mode)
