"""Bijection between semantic variable keys and flat bit positions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterator

import numpy as np

UNUSED = -1


@dataclass
class VariableMap:
    """Named index blocks laid out contiguously over ``0..n_vars-1``.

    Each block is an integer array whose entries are flat indices (``UNUSED``
    marks grid cells that do not exist). A key is ``(block, *grid_index)``,
    e.g. ``("x", i, j, r)`` for the GPS edge/order variables.
    """

    kind: str
    dims: dict
    blocks: dict[str, np.ndarray]
    clamped: frozenset[int] = frozenset()
    _forward: dict[tuple, int] | None = field(default=None, repr=False, compare=False)

    @property
    def n_vars(self) -> int:
        return sum(int(np.count_nonzero(b != UNUSED)) for b in self.blocks.values())

    def __getitem__(self, name: str) -> np.ndarray:
        return self.blocks[name]

    def index(self, *key) -> int:
        name, *pos = key
        flat = int(self.blocks[name][tuple(pos)])
        if flat == UNUSED:
            raise KeyError(key)
        return flat

    def entries(self) -> Iterator[tuple[tuple, int]]:
        for name, block in self.blocks.items():
            for pos in zip(*np.nonzero(block != UNUSED)):
                yield (name, *(int(p) for p in pos)), int(block[pos])

    @property
    def forward(self) -> dict[tuple, int]:
        if self._forward is None:
            self._forward = dict(self.entries())
        return self._forward

    @property
    def backward(self) -> list[tuple]:
        out: list[tuple] = [()] * self.n_vars
        for key, flat in self.forward.items():
            out[flat] = key
        return out

    def active(self, flat: int) -> bool:
        return flat not in self.clamped

    def clamped_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vars, dtype=bool)
        if self.clamped:
            mask[np.fromiter(self.clamped, dtype=np.int64)] = True
        return mask

    def validate(self) -> None:
        flats = np.concatenate([b[b != UNUSED].ravel() for b in self.blocks.values()])
        if flats.size and not np.array_equal(np.sort(flats), np.arange(flats.size)):
            raise ValueError("flat indices are not a contiguous bijection")
        if any(c < 0 or c >= flats.size for c in self.clamped):
            raise ValueError("clamped index out of range")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dims": {**self.dims, "blocks": {k: list(v.shape) for k, v in self.blocks.items()}},
            "entries": [[*key, flat] for key, flat in self.entries()],
            "clamped": sorted(int(c) for c in self.clamped),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VariableMap":
        try:
            dims = dict(data["dims"])
            shapes = dims.pop("blocks")
            blocks = {k: np.full(tuple(s), UNUSED, dtype=np.int64) for k, s in shapes.items()}
            for entry in data["entries"]:
                name, *pos, flat = entry
                blocks[name][tuple(pos)] = int(flat)
            vm = cls(str(data["kind"]), dims, blocks, frozenset(int(c) for c in data.get("clamped", [])))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ValueError(f"corrupted variable map: {exc!r}") from exc
        vm.validate()
        return vm


def save_varmap(varmap: VariableMap, path: str | PathLike, extra: dict | None = None) -> None:
    doc = varmap.to_dict()
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_varmap(path: str | PathLike) -> tuple[VariableMap, dict]:
    """Load a sidecar map; returns the map plus the raw document for extra keys."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"corrupted variable map: {exc}") from exc
    return VariableMap.from_dict(doc), doc


class _Allocator:
    """Hands out consecutive flat indices while a builder lays out its blocks."""

    def __init__(self) -> None:
        self.next = 0
        self.blocks: dict[str, np.ndarray] = {}

    def block(self, name: str, shape: tuple[int, ...], mask: np.ndarray | None = None) -> np.ndarray:
        arr = np.full(shape, UNUSED, dtype=np.int64)
        if mask is None:
            mask = np.ones(shape, dtype=bool)
        count = int(mask.sum())
        arr[mask] = np.arange(self.next, self.next + count)
        self.next += count
        self.blocks[name] = arr
        return arr
