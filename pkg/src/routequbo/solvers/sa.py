"""Single-flip Metropolis simulated annealing for QUBO models."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
import scipy.sparse as sp

from ..qubo import QuboModel

SCHEDULES = ("median", "delta", "sigma")


@dataclass(frozen=True)
class SaParams:
    """Annealing controls.

    When ``beta_start``/``beta_end`` are left as ``None`` they are derived
    from the model with ``schedule``:

    ``"median"``
        ``ln 100 / m`` to ``30 / m`` with ``m`` the median nonzero coefficient
        magnitude, so a typical single-term uphill move is accepted 1% of the
        time at the hot end and essentially never at the cold end.
    ``"delta"``
        ``ln 2 / max|flip gain|`` to ``ln 100 / min|flip gain|``, so the hot
        end accepts every uphill move half the time and the cold end freezes
        the smallest one.
    ``"sigma"``
        ``0.1 / sigma_E`` to ``10 / sigma_E`` with ``sigma_E`` the standard
        deviation of the energy over 1000 uniform random assignments.
    """

    num_reads: int = 100
    sweeps: int = 1000
    beta_start: float | None = None
    beta_end: float | None = None
    seed: int = 0
    schedule: str = "median"

    def __post_init__(self) -> None:
        if self.num_reads < 1:
            raise ValueError("num_reads must be at least 1")
        if self.sweeps < 1:
            raise ValueError("sweeps must be at least 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if (self.beta_start is None) != (self.beta_end is None):
            raise ValueError("give both beta_start and beta_end, or neither")
        if self.beta_start is not None:
            if not (0 < self.beta_start < self.beta_end):
                raise ValueError("need 0 < beta_start < beta_end")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SampleSet:
    """Assignments sorted by ascending energy."""

    samples: np.ndarray
    energies: np.ndarray
    info: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.energies.size)

    def __iter__(self):
        return iter(zip(self.samples, self.energies))

    @property
    def best(self) -> tuple[np.ndarray, float]:
        return self.samples[0], float(self.energies[0])

    def to_dict(self) -> dict:
        return {
            "samples": [
                {"bits": "".join(map(str, row.tolist())), "energy": float(e)}
                for row, e in zip(self.samples, self.energies)
            ],
            "elapsed_s": float(self.info.get("elapsed_s", 0.0)),
            "params": dict(self.info.get("params", {})),
        }


def _symmetric(model: QuboModel) -> sp.csr_matrix:
    up = model.upper_matrix()
    full = (up + up.T).tocsr()
    full.sort_indices()
    return full


def sigma_beta_range(model: QuboModel, seed: int = 0, samples: int = 1000) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    e = model.energies(rng.integers(0, 2, size=(samples, model.n_vars)))
    sigma = float(np.std(e))
    if not sigma > 0:
        sigma = 1.0
    return 0.1 / sigma, 10.0 / sigma


def _coefficients(model: QuboModel) -> np.ndarray:
    c = np.abs(np.concatenate([model.linear_array(), model.quadratic_arrays()[2]]))
    return c[c > 0]


def median_beta_range(model: QuboModel) -> tuple[float, float]:
    c = _coefficients(model)
    m = float(np.median(c)) if c.size else 1.0
    return math.log(100.0) / m, 30.0 / m


def delta_beta_range(model: QuboModel) -> tuple[float, float]:
    full = _symmetric(model)
    lin = model.linear_array()
    absrow = np.asarray(abs(full).sum(axis=1)).ravel()
    hi = float(np.max(np.abs(lin) + absrow, initial=0.0))
    cand = np.abs(np.concatenate([lin, full.data]))
    cand = cand[cand > 0]
    lo = float(cand.min()) if cand.size else 1.0
    if not hi > 0:
        hi = 1.0
    start = math.log(2.0) / hi
    end = math.log(100.0) / lo
    return start, max(end, start * 1.0001)


def beta_range(model: QuboModel, params: SaParams) -> tuple[float, float]:
    if params.beta_start is not None:
        return float(params.beta_start), float(params.beta_end)
    if params.schedule == "sigma":
        return sigma_beta_range(model, params.seed)
    if params.schedule == "delta":
        return delta_beta_range(model)
    return median_beta_range(model)


@numba.njit(cache=True)
def _anneal(indptr, indices, data, lin, active, betas, seeds):
    n = lin.size
    n_reads = seeds.size
    out = np.zeros((n_reads, n), dtype=np.int8)
    field_ = np.empty(n)
    for r in range(n_reads):
        np.random.seed(seeds[r])
        x = np.zeros(n, dtype=np.int8)
        for v in active:
            if np.random.random() < 0.5:
                x[v] = 1
        for v in range(n):
            acc = lin[v]
            for k in range(indptr[v], indptr[v + 1]):
                acc += data[k] * x[indices[k]]
            field_[v] = acc
        for beta in betas:
            for v in active:
                delta = field_[v] if x[v] == 0 else -field_[v]
                if delta <= 0.0 or np.random.random() < math.exp(-beta * delta):
                    step = 1.0 if x[v] == 0 else -1.0
                    x[v] = 1 - x[v]
                    for k in range(indptr[v], indptr[v + 1]):
                        field_[indices[k]] += step * data[k]
        improved = True
        while improved:
            improved = False
            for v in active:
                delta = field_[v] if x[v] == 0 else -field_[v]
                if delta < -1e-12:
                    step = 1.0 if x[v] == 0 else -1.0
                    x[v] = 1 - x[v]
                    for k in range(indptr[v], indptr[v + 1]):
                        field_[indices[k]] += step * data[k]
                    improved = True
        out[r] = x
    return out


def read_seeds(seed: int, num_reads: int) -> np.ndarray:
    """Independent 32-bit seeds, one per read."""
    return np.random.SeedSequence(seed).generate_state(num_reads).astype(np.int64)


def solve_sa(model: QuboModel, params: SaParams | None = None) -> SampleSet:
    """Run ``num_reads`` independent anneals on a geometric beta schedule.

    Read ``k`` draws from its own stream, the ``k``-th seed spawned from
    ``seed``, so results do not depend on how reads are batched. Every read
    ends with a greedy descent to a single-flip local minimum. Energies are re-evaluated through
    :meth:`QuboModel.energy` before sorting; ties keep read order.
    """
    params = params or SaParams()
    t0 = time.perf_counter()
    n = model.n_vars
    if n == 0:
        return SampleSet(np.zeros((1, 0), dtype=np.int8), np.array([model.energy(np.zeros(0))]),
                         {"elapsed_s": time.perf_counter() - t0, "params": params.to_dict()})
    full = _symmetric(model)
    lin = model.linear_array()
    touched = (lin != 0) | (np.diff(full.indptr) > 0)
    active = np.flatnonzero(touched).astype(np.int64)
    b0, b1 = beta_range(model, params)
    betas = np.geomspace(b0, b1, params.sweeps)
    raw = _anneal(full.indptr.astype(np.int64), full.indices.astype(np.int64), full.data.astype(np.float64),
                  lin.astype(np.float64), active, betas, read_seeds(params.seed, params.num_reads))
    energies = np.array([model.energy(row) for row in raw])
    order = np.argsort(energies, kind="stable")
    info = {
        "elapsed_s": time.perf_counter() - t0,
        "params": {**params.to_dict(), "beta_start": b0, "beta_end": b1},
    }
    return SampleSet(raw[order], energies[order], info)
