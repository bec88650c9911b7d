from __future__ import annotations

import numpy as np

from ..qubo import ENERGY_TOL, QuboModel

DEFAULT_VAR_LIMIT = 24
_CHUNK_BITS = 16


def _bits_of(codes: np.ndarray, n: int) -> np.ndarray:
    return ((codes[:, None] >> np.arange(n)) & 1).astype(np.int8)


def solve_exhaustive(model: QuboModel, var_limit: int = DEFAULT_VAR_LIMIT) -> tuple[np.ndarray, float]:
    """Global minimum by enumerating every assignment.

    Assignment ``k`` sets ``x_i = (k >> i) & 1``. Among energies within
    ``ENERGY_TOL`` of the minimum the smallest ``k`` wins, so a one-hot
    group over three bits resolves to ``(1, 0, 0)``.

    Raises
    ------
    ValueError
        If the model has more than ``var_limit`` variables.
    """
    n = model.n_vars
    if n > var_limit:
        raise ValueError(f"model has {n} variables, exhaustive limit is {var_limit}")
    best_code = 0
    best_e = np.inf
    total = 1 << n
    step = 1 << min(n, _CHUNK_BITS)
    for start in range(0, total, step):
        codes = np.arange(start, min(start + step, total), dtype=np.int64)
        e = model.energies(_bits_of(codes, n))
        k = int(np.argmin(e))
        if e[k] < best_e - ENERGY_TOL:
            # earliest code inside the tolerance band of this chunk's minimum
            k = int(np.flatnonzero(e <= e[k] + ENERGY_TOL)[0])
            best_code, best_e = int(codes[k]), float(e[k])
    bits = _bits_of(np.array([best_code], dtype=np.int64), n)[0]
    return bits, model.energy(bits)
