from __future__ import annotations

from typing import Iterable

import numpy as np

from ..qubo import LinearExpr, QuboModel, add_equality_penalty
from .varmap import UNUSED


def add_exactly(model: QuboModel, indices: Iterable[int], weight: float, tag: str, target: int = 1) -> None:
    """``weight * (sum(x) - target)**2`` over the non-clamped ``indices``."""
    idx = [int(i) for i in indices if i != UNUSED]
    add_equality_penalty(model, LinearExpr.ones(idx, -float(target)), weight, tag)


def transitivity_penalty(a: int, b: int, c: int) -> tuple[dict[tuple[int, int], float], dict[int, float]]:
    """Terms of ``P(a, b, c) = ab - ac - bc + c`` for three precedence bits.

    With ``a`` = "i before j", ``b`` = "j before k" and ``c`` = "i before k",
    ``P`` is 1 on the cyclic patterns (0, 0, 1) and (1, 1, 0) and 0 otherwise.
    Returns the canonical quadratic pairs and the linear term.
    """
    if len({a, b, c}) != 3:
        raise ValueError("transitivity penalty needs three distinct variables")

    def pair(u: int, v: int) -> tuple[int, int]:
        return (u, v) if u < v else (v, u)

    quad = {pair(a, b): 1.0, pair(a, c): -1.0, pair(b, c): -1.0}
    return quad, {c: 1.0}


def transitivity_value(a: int, b: int, c: int) -> int:
    return a * b - a * c - b * c + c * c


def add_transitivity(model: QuboModel, a, b, c, weight: float, tag: str) -> None:
    """Vectorised sum of ``weight * P(a_k, b_k, c_k)`` over index triples."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    c = np.asarray(c, dtype=np.int64)
    if a.size == 0:
        return
    if np.any((a == b) | (a == c) | (b == c)):
        raise ValueError("transitivity penalty needs three distinct variables")
    model.add_quadratic_terms(np.concatenate([a, a, b]), np.concatenate([b, c, c]),
                              np.concatenate([np.full(a.size, weight), np.full(2 * a.size, -weight)]), tag)
    model.add_linear_terms(c, weight, tag)


def ordered_triples(nodes) -> np.ndarray:
    """All ordered triples of distinct entries of ``nodes`` as an ``(m, 3)`` array."""
    nodes = np.asarray(list(nodes), dtype=np.int64)
    if nodes.size < 3:
        return np.zeros((0, 3), dtype=np.int64)
    i, j, k = np.meshgrid(nodes, nodes, nodes, indexing="ij")
    keep = (i != j) & (i != k) & (j != k)
    return np.column_stack([i[keep], j[keep], k[keep]])
