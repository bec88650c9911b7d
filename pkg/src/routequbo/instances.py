"""Routing instances: generators, distance matrices and JSON persistence.

Node convention used by every formulation: a closed tour over ``N`` cities is
modelled on ``T = N + 1`` node indices. Indices ``0..N-1`` are the cities,
index ``0`` is the start depot and index ``N`` is a copy of city ``0`` acting
as the end depot.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from os import PathLike

import numpy as np

DEFAULT_SCALE = 1000


@dataclass(frozen=True, eq=False)
class RoutingInstance:
    name: str
    city_dist: np.ndarray
    coords: np.ndarray | None = None
    scale: int = DEFAULT_SCALE
    symmetric: bool = True
    dist: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        d = np.array(self.city_dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 2:
            raise ValueError("distance matrix must be square with at least two cities")
        if not np.all(np.isfinite(d)):
            raise ValueError("distances must be finite")
        if np.any(d < 0):
            raise ValueError("distances must be non-negative")
        if np.any(np.diag(d) != 0):
            raise ValueError("diagonal distances must be zero")
        if self.symmetric and not np.allclose(d, d.T, rtol=0, atol=1e-12):
            raise ValueError("distance matrix is not symmetric")
        if int(self.scale) < 1:
            raise ValueError("scale must be a positive integer")
        d.setflags(write=False)
        object.__setattr__(self, "city_dist", d)
        object.__setattr__(self, "scale", int(self.scale))
        if self.coords is not None:
            c = np.array(self.coords, dtype=float).reshape(-1, 2)
            if c.shape[0] != d.shape[0]:
                raise ValueError("coords and distance matrix disagree on city count")
            c.setflags(write=False)
            object.__setattr__(self, "coords", c)
        full = np.empty((self.n_nodes, self.n_nodes))
        full[: self.n_cities, : self.n_cities] = d
        full[-1, : self.n_cities] = d[0]
        full[: self.n_cities, -1] = d[:, 0]
        full[-1, -1] = 0.0
        full.setflags(write=False)
        object.__setattr__(self, "dist", full)

    @property
    def n_cities(self) -> int:
        return self.city_dist.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.n_cities + 1

    @property
    def depot_start(self) -> int:
        return 0

    @property
    def depot_end(self) -> int:
        return self.n_cities

    def int_dist(self) -> np.ndarray:
        """Node distances rounded to integers after multiplying by ``scale``."""
        return np.rint(self.dist * self.scale).astype(np.int64)

    def length_upper_bound(self) -> float:
        """Sum over nodes of the longest outgoing distance; bounds any route length."""
        return float(self.dist.max(axis=1).sum())

    def with_scale(self, scale: int) -> "RoutingInstance":
        return RoutingInstance(self.name, self.city_dist, self.coords, scale, self.symmetric)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RoutingInstance):
            return NotImplemented
        same_coords = (self.coords is None and other.coords is None) or (
            self.coords is not None
            and other.coords is not None
            and np.array_equal(self.coords, other.coords)
        )
        return (
            self.name == other.name
            and self.scale == other.scale
            and same_coords
            and np.array_equal(self.city_dist, other.city_dist)
        )


@dataclass(frozen=True)
class VrpConfig:
    instance: RoutingInstance
    n_vehicles: int

    def __post_init__(self) -> None:
        if self.n_vehicles < 1:
            raise ValueError("at least one vehicle is required")
        if self.n_vehicles > self.instance.n_cities:
            raise ValueError("more vehicles than cities")


def euclidean_matrix(coords: np.ndarray) -> np.ndarray:
    c = np.asarray(coords, dtype=float)
    diff = c[:, None, :] - c[None, :, :]
    d = np.sqrt((diff**2).sum(axis=-1))
    np.fill_diagonal(d, 0.0)
    return d


def from_coords(coords, name: str = "coords", scale: int = DEFAULT_SCALE) -> RoutingInstance:
    c = np.asarray(coords, dtype=float).reshape(-1, 2)
    return RoutingInstance(name, euclidean_matrix(c), c, scale)


def regular_polygon(n: int, circumradius: float = 1.0, scale: int = DEFAULT_SCALE) -> RoutingInstance:
    """Cities on the vertices of a regular ``n``-gon, city ``k`` at angle ``2*pi*k/n``."""
    if n < 3:
        raise ValueError("a polygon needs at least three vertices")
    if not circumradius > 0:
        raise ValueError("circumradius must be positive")
    k = np.arange(n)
    ang = 2.0 * np.pi * k / n
    coords = circumradius * np.column_stack([np.cos(ang), np.sin(ang)])
    # exact zeros keep the square's coordinates clean
    coords[np.abs(coords) < 1e-15] = 0.0
    return from_coords(coords, f"polygon-{n}", scale)


def polygon_tour_length(n: int, circumradius: float = 1.0) -> float:
    return 2.0 * n * circumradius * math.sin(math.pi / n)


def random_euclidean(n: int, seed: int = 0, box: float = 1.0, scale: int = DEFAULT_SCALE) -> RoutingInstance:
    if n < 2:
        raise ValueError("need at least two cities")
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, box, size=(n, 2))
    return from_coords(coords, f"random-{n}-{seed}", scale)


def instance_to_dict(instance: RoutingInstance) -> dict:
    out: dict = {"name": instance.name, "scale": instance.scale}
    if instance.coords is not None:
        out["coords"] = instance.coords.tolist()
    out["dist"] = instance.city_dist.tolist()
    if not instance.symmetric:
        out["symmetric"] = False
    return out


def instance_from_dict(data: dict) -> RoutingInstance:
    if not isinstance(data, dict):
        raise ValueError("instance document must be a JSON object")
    name = str(data.get("name", "instance"))
    scale = int(data.get("scale", DEFAULT_SCALE))
    symmetric = bool(data.get("symmetric", True))
    coords = data.get("coords")
    dist = data.get("dist")
    if coords is None and dist is None:
        raise ValueError("instance needs coords or dist")
    try:
        c = None if coords is None else np.asarray(coords, dtype=float).reshape(-1, 2)
        d = euclidean_matrix(c) if dist is None else np.asarray(dist, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"malformed instance: {exc}") from exc
    return RoutingInstance(name, d, c, scale, symmetric)


def save_instance(instance: RoutingInstance, path: str | PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(instance), fh, indent=1)


def load_instance(path: str | PathLike) -> RoutingInstance:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed instance file: {exc}") from exc
    return instance_from_dict(data)
