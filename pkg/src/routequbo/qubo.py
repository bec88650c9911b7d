"""QUBO and Ising containers, penalty expansion helpers and energy evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from os import PathLike
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

ENERGY_TOL = 1e-9

OBJECTIVE = "objective"


@dataclass
class LinearExpr:
    """Sparse linear expression ``sum_i terms[i] * x_i + constant``."""

    terms: dict[int, float] = field(default_factory=dict)
    constant: float = 0.0

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]], constant: float = 0.0) -> "LinearExpr":
        terms: dict[int, float] = {}
        for i, c in pairs:
            terms[int(i)] = terms.get(int(i), 0.0) + float(c)
        return cls(terms, float(constant))

    @classmethod
    def ones(cls, indices: Iterable[int], constant: float = 0.0) -> "LinearExpr":
        return cls.from_pairs(((i, 1.0) for i in indices), constant)

    def evaluate(self, bits: Sequence[int] | np.ndarray) -> float:
        return self.constant + sum(c * bits[i] for i, c in self.terms.items())

    def min_value(self) -> float:
        return self.constant + sum(min(c, 0.0) for c in self.terms.values())

    def max_value(self) -> float:
        return self.constant + sum(max(c, 0.0) for c in self.terms.values())


class _Terms:
    """Append-only buffer of COO chunks."""

    def __init__(self) -> None:
        self.lin_idx: list[np.ndarray] = []
        self.lin_val: list[np.ndarray] = []
        self.q_row: list[np.ndarray] = []
        self.q_col: list[np.ndarray] = []
        self.q_val: list[np.ndarray] = []
        self.offset = 0.0

    def compile(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float]:
        lin = np.zeros(n)
        if self.lin_idx:
            np.add.at(lin, np.concatenate(self.lin_idx), np.concatenate(self.lin_val))
        if not self.q_row:
            empty = np.zeros(0, dtype=np.int64)
            return lin, empty, empty.copy(), np.zeros(0), self.offset
        r = np.concatenate(self.q_row)
        c = np.concatenate(self.q_col)
        v = np.concatenate(self.q_val)
        diag = r == c
        if diag.any():
            np.add.at(lin, r[diag], v[diag])
            r, c, v = r[~diag], c[~diag], v[~diag]
        lo = np.minimum(r, c)
        hi = np.maximum(r, c)
        key = lo * n + hi
        uniq, inv = np.unique(key, return_inverse=True)
        vals = np.zeros(uniq.size)
        np.add.at(vals, inv, v)
        keep = vals != 0.0
        uniq, vals = uniq[keep], vals[keep]
        return lin, uniq // n, uniq % n, vals, self.offset


@dataclass(frozen=True)
class _Compiled:
    n: int
    lin: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    offset: float

    @property
    def upper(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.n, self.n))


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"non-finite {what}")


class QuboModel:
    """Quadratic binary model ``offset + sum_i b_i x_i + sum_{i<j} q_ij x_i x_j``.

    Terms are appended during construction, optionally under a family tag so
    that the contribution of each penalty family can be evaluated separately.
    Pairs are canonicalised to ``i < j`` and diagonal pairs are folded into the
    linear part (``x_i * x_i == x_i``). After :meth:`freeze` the model rejects
    further additions.
    """

    def __init__(self, n_vars: int = 0) -> None:
        if n_vars < 0:
            raise ValueError("n_vars must be non-negative")
        self._n = int(n_vars)
        self._untagged = _Terms()
        self._parts: dict[str, _Terms] = {}
        self._frozen = False
        self._cache: _Compiled | None = None
        self._part_cache: dict[str, QuboModel] = {}

    # -- construction -----------------------------------------------------
    @property
    def n_vars(self) -> int:
        return self._n

    @property
    def frozen(self) -> bool:
        return self._frozen

    def _buffer(self, tag: str | None) -> _Terms:
        if self._frozen:
            raise RuntimeError("model is frozen")
        self._cache = None
        self._part_cache.clear()
        if tag is None:
            return self._untagged
        return self._parts.setdefault(tag, _Terms())

    def add_variables(self, count: int) -> range:
        """Grow the model by ``count`` fresh variables and return their indices."""
        if self._frozen:
            raise RuntimeError("model is frozen")
        start = self._n
        self._n += int(count)
        self._cache = None
        return range(start, self._n)

    def _check_index(self, idx: np.ndarray) -> None:
        if idx.size and (idx.min() < 0 or idx.max() >= self._n):
            raise IndexError(f"variable index out of range for n_vars={self._n}")

    def add_linear_terms(self, idx, coef, tag: str | None = None) -> None:
        idx = np.asarray(idx, dtype=np.int64).ravel()
        coef = np.broadcast_to(np.asarray(coef, dtype=float), idx.shape).copy()
        _check_finite(coef, "coefficient")
        self._check_index(idx)
        buf = self._buffer(tag)
        buf.lin_idx.append(idx)
        buf.lin_val.append(coef)

    def add_quadratic_terms(self, rows, cols, coef, tag: str | None = None) -> None:
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        if rows.shape != cols.shape:
            raise ValueError("rows and cols differ in length")
        coef = np.broadcast_to(np.asarray(coef, dtype=float), rows.shape).copy()
        _check_finite(coef, "coefficient")
        self._check_index(rows)
        self._check_index(cols)
        buf = self._buffer(tag)
        buf.q_row.append(rows)
        buf.q_col.append(cols)
        buf.q_val.append(coef)

    def add_linear(self, i: int, coef: float, tag: str | None = None) -> None:
        self.add_linear_terms([i], [coef], tag)

    def add_quadratic(self, i: int, j: int, coef: float, tag: str | None = None) -> None:
        self.add_quadratic_terms([i], [j], [coef], tag)

    def add_offset(self, value: float, tag: str | None = None) -> None:
        if not math.isfinite(value):
            raise ValueError("non-finite offset")
        self._buffer(tag).offset += float(value)

    def freeze(self) -> "QuboModel":
        self._compiled()
        self._frozen = True
        return self

    # -- compiled views ---------------------------------------------------
    def _compiled(self) -> _Compiled:
        if self._cache is None:
            bufs = [self._untagged, *self._parts.values()]
            merged = _Terms()
            for b in bufs:
                merged.lin_idx += b.lin_idx
                merged.lin_val += b.lin_val
                merged.q_row += b.q_row
                merged.q_col += b.q_col
                merged.q_val += b.q_val
                merged.offset += b.offset
            self._cache = _Compiled(self._n, *merged.compile(self._n))
        return self._cache

    @property
    def offset(self) -> float:
        return self._compiled().offset

    @property
    def linear(self) -> dict[int, float]:
        lin = self._compiled().lin
        return {int(i): float(lin[i]) for i in np.flatnonzero(lin)}

    @property
    def quadratic(self) -> dict[tuple[int, int], float]:
        c = self._compiled()
        return {(int(i), int(j)): float(v) for i, j, v in zip(c.rows, c.cols, c.vals)}

    def linear_array(self) -> np.ndarray:
        return self._compiled().lin.copy()

    def quadratic_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = self._compiled()
        return c.rows.copy(), c.cols.copy(), c.vals.copy()

    def upper_matrix(self) -> sp.csr_matrix:
        return self._compiled().upper

    @property
    def families(self) -> tuple[str, ...]:
        return tuple(self._parts)

    def family(self, tag: str) -> "QuboModel":
        """Frozen sub-model holding only the terms added under ``tag``."""
        if tag not in self._parts:
            raise KeyError(tag)
        if tag not in self._part_cache:
            sub = QuboModel(self._n)
            buf = self._parts[tag]
            sub._untagged = buf
            sub._frozen = True
            self._part_cache[tag] = sub
        return self._part_cache[tag]

    # -- evaluation -------------------------------------------------------
    def energies(self, assignments) -> np.ndarray:
        """Energies of a batch of assignments, shape ``(k, n_vars)``."""
        a = np.asarray(assignments, dtype=float)
        if a.ndim == 1:
            a = a[None, :]
        if a.shape[1] != self._n:
            raise ValueError(f"assignment length {a.shape[1]} != n_vars {self._n}")
        c = self._compiled()
        e = np.full(a.shape[0], c.offset) + a @ c.lin
        if c.vals.size:
            e += np.einsum("ij,ij->i", np.asarray((c.upper @ a.T).T), a)
        return e

    def energy(self, assignment) -> float:
        """Energy of one assignment, summed exactly over the raw terms.

        Penalties with large integer coefficients cancel heavily, so the
        merged-coefficient path used by :meth:`energies` can drift by ~1e-8.
        Summing every stored term with exact rounding keeps this value, and
        the per-family split of it, accurate to the last ulp.
        """
        a = np.asarray(assignment).ravel()
        if a.size != self._n:
            raise ValueError(f"assignment length {a.size} != n_vars {self._n}")
        on = a.astype(bool)
        parts: list[float] = []
        for buf in (self._untagged, *self._parts.values()):
            parts.append(buf.offset)
            for idx, val in zip(buf.lin_idx, buf.lin_val):
                parts.extend(np.broadcast_to(val, idx.shape)[on[idx]].tolist())
            for r, c, val in zip(buf.q_row, buf.q_col, buf.q_val):
                parts.extend(np.broadcast_to(val, r.shape)[on[r] & on[c]].tolist())
        return math.fsum(parts)

    def __repr__(self) -> str:
        s = stats(self)
        return f"QuboModel(n_vars={s.n_vars}, n_linear={s.n_linear}, n_quadratic={s.n_quadratic})"


@dataclass(frozen=True)
class SizeReport:
    n_vars: int
    n_linear: int
    n_quadratic: int


@dataclass
class IsingModel:
    """Spin model ``offset + sum_i h_i z_i + sum_{i<j} J_ij z_i z_j`` with z in {-1, +1}."""

    n_vars: int
    h: dict[int, float] = field(default_factory=dict)
    J: dict[tuple[int, int], float] = field(default_factory=dict)
    offset: float = 0.0

    def energies(self, spins) -> np.ndarray:
        z = np.asarray(spins, dtype=float)
        if z.ndim == 1:
            z = z[None, :]
        if z.shape[1] != self.n_vars:
            raise ValueError("spin vector length mismatch")
        e = np.full(z.shape[0], self.offset)
        for i, hi in self.h.items():
            e += hi * z[:, i]
        for (i, j), jij in self.J.items():
            e += jij * z[:, i] * z[:, j]
        return e

    def energy(self, spins) -> float:
        return float(self.energies(np.asarray(spins).reshape(1, -1))[0])


def new_model(n_vars: int) -> QuboModel:
    return QuboModel(n_vars)


def energy(model: QuboModel, assignment) -> float:
    return model.energy(assignment)


def stats(model: QuboModel) -> SizeReport:
    c = model._compiled()
    return SizeReport(model.n_vars, int(np.count_nonzero(c.lin)), int(c.vals.size))


def _expr_arrays(expr: LinearExpr) -> tuple[np.ndarray, np.ndarray]:
    items = [(i, c) for i, c in expr.terms.items() if c != 0.0]
    idx = np.array([i for i, _ in items], dtype=np.int64)
    coef = np.array([c for _, c in items], dtype=float)
    _check_finite(coef, "coefficient")
    if not math.isfinite(expr.constant):
        raise ValueError("non-finite constant")
    return idx, coef


def add_equality_penalty(model: QuboModel, expr: LinearExpr, weight: float, tag: str | None = None) -> None:
    """Add ``weight * expr**2`` to ``model`` with ``x**2`` folded into ``x``."""
    if not math.isfinite(weight) or weight <= 0:
        raise ValueError("penalty weight must be positive and finite")
    idx, coef = _expr_arrays(expr)
    k = expr.constant
    model.add_linear_terms(idx, weight * (coef * coef + 2.0 * k * coef), tag)
    if idx.size > 1:
        a, b = np.triu_indices(idx.size, 1)
        model.add_quadratic_terms(idx[a], idx[b], 2.0 * weight * coef[a] * coef[b], tag)
    model.add_offset(weight * k * k, tag)


def slack_width(gap: int) -> int:
    """Number of binary slack bits covering every integer in ``0..gap``."""
    if gap < 0:
        raise ValueError("negative slack gap")
    return int(gap).bit_length()


def add_inequality_penalty(
    model: QuboModel,
    expr: LinearExpr,
    bound: int,
    weight: float,
    slack_alloc: Callable[[int], Sequence[int]] | None = None,
    max_gap: int | None = None,
    tag: str | None = None,
) -> range | list[int]:
    """Penalise ``expr > bound`` through binary slack bits.

    Adds ``weight * (expr + sum_h 2**h s_h - bound)**2`` where the slack bits
    ``s_h`` cover ``0..gap`` and ``gap`` is the largest achievable value of
    ``bound - expr`` (or ``max_gap`` when the caller knows a tighter range).

    Returns
    -------
    Indices of the freshly allocated slack bits.
    """
    if bound < 0:
        raise ValueError("bound must be non-negative")
    idx, coef = _expr_arrays(expr)
    if not all(float(c).is_integer() for c in coef) or not float(expr.constant).is_integer():
        raise ValueError("inequality penalties need integer coefficients")
    lo = expr.min_value()
    if lo > bound:
        raise ValueError("inequality is infeasible for every assignment")
    gap = int(round(bound - lo)) if max_gap is None else int(max_gap)
    width = slack_width(gap)
    alloc = slack_alloc if slack_alloc is not None else model.add_variables
    slack = alloc(width)
    if len(slack) != width:
        raise ValueError("slack allocator returned the wrong number of bits")
    terms = dict(expr.terms)
    for h, s in enumerate(slack):
        terms[int(s)] = terms.get(int(s), 0.0) + float(2**h)
    add_equality_penalty(model, LinearExpr(terms, expr.constant - bound), weight, tag)
    return slack


def to_ising(model: QuboModel) -> IsingModel:
    """Substitute ``x = (1 - z) / 2`` and collect spin coefficients."""
    c = model._compiled()
    h = -0.5 * c.lin
    offset = c.offset + 0.5 * c.lin.sum()
    J: dict[tuple[int, int], float] = {}
    if c.vals.size:
        quarter = 0.25 * c.vals
        np.add.at(h, c.rows, -quarter)
        np.add.at(h, c.cols, -quarter)
        offset += quarter.sum()
        J = {(int(i), int(j)): float(v) for i, j, v in zip(c.rows, c.cols, quarter)}
    hd = {int(i): float(h[i]) for i in np.flatnonzero(h)}
    return IsingModel(model.n_vars, hd, J, float(offset))


# -- JSON ---------------------------------------------------------------------


def _terms_json(lin: np.ndarray, rows, cols, vals, offset: float) -> dict:
    return {
        "offset": float(offset),
        "linear": [[int(i), float(lin[i])] for i in np.flatnonzero(lin)],
        "quadratic": [[int(i), int(j), float(v)] for i, j, v in zip(rows, cols, vals)],
    }


def model_to_dict(model: QuboModel) -> dict:
    c = model._compiled()
    out = {"n_vars": model.n_vars, **_terms_json(c.lin, c.rows, c.cols, c.vals, c.offset)}
    if model.families:
        out["families"] = {}
        for tag in model.families:
            fc = model.family(tag)._compiled()
            out["families"][tag] = _terms_json(fc.lin, fc.rows, fc.cols, fc.vals, fc.offset)
    return out


def _fill(model: QuboModel, data: Mapping, tag: str | None) -> None:
    lin = data.get("linear", [])
    if lin:
        arr = np.asarray(lin, dtype=float).reshape(-1, 2)
        model.add_linear_terms(arr[:, 0].astype(np.int64), arr[:, 1], tag)
    quad = data.get("quadratic", [])
    if quad:
        arr = np.asarray(quad, dtype=float).reshape(-1, 3)
        if np.any(arr[:, 0] >= arr[:, 1]):
            raise ValueError("quadratic pairs must satisfy i < j")
        model.add_quadratic_terms(arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2], tag)
    model.add_offset(float(data.get("offset", 0.0)), tag)


def model_from_dict(data: Mapping) -> QuboModel:
    try:
        model = QuboModel(int(data["n_vars"]))
    except (KeyError, TypeError) as exc:
        raise ValueError("malformed QUBO document") from exc
    if "families" in data:
        for tag, part in data["families"].items():
            _fill(model, part, tag)
        total = model._compiled()
        ref = QuboModel(model.n_vars)
        _fill(ref, data, None)
        rc = ref._compiled()
        same = (
            np.allclose(total.lin, rc.lin, rtol=1e-9, atol=1e-6)
            and np.array_equal(total.rows, rc.rows)
            and np.array_equal(total.cols, rc.cols)
            and np.allclose(total.vals, rc.vals, rtol=1e-9, atol=1e-6)
            and math.isclose(total.offset, rc.offset, rel_tol=1e-9, abs_tol=1e-6)
        )
        if not same:
            raise ValueError("family terms do not add up to the model terms")
    else:
        _fill(model, data, None)
    return model.freeze()


def ising_to_dict(ising: IsingModel) -> dict:
    return {
        "n_vars": ising.n_vars,
        "offset": ising.offset,
        "h": [[i, v] for i, v in sorted(ising.h.items())],
        "J": [[i, j, v] for (i, j), v in sorted(ising.J.items())],
    }


def save_model(model: QuboModel, path: str | PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path: str | PathLike) -> QuboModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
