"""Model parameters, stations, networks and grid arithmetic."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, NamedTuple

import networkx as nx
import numpy as np

from .errors import InvalidArgument, ModelViolation


@dataclass(frozen=True)
class ModelParams:
    alpha: float = 3.0
    beta: float = 1.0
    noise: float = 1.0
    epsilon: float = 0.5
    power: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "noise", "epsilon", "power"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InvalidArgument(f"{name} must be a finite number, got {value!r}")
        if self.alpha < 2:
            raise InvalidArgument(f"alpha must be >= 2, got {self.alpha}")
        if self.beta < 1:
            raise InvalidArgument(f"beta must be >= 1, got {self.beta}")
        if self.noise < 1:
            raise InvalidArgument(f"noise must be >= 1, got {self.noise}")
        if self.epsilon <= 0:
            raise InvalidArgument(f"epsilon must be > 0, got {self.epsilon}")
        if self.power <= 0:
            raise InvalidArgument(f"power must be > 0, got {self.power}")

    @property
    def range(self) -> float:
        return (self.power / ((1 + self.epsilon) * self.beta * self.noise)) ** (1 / self.alpha)

    @property
    def pivotal(self) -> float:
        return self.range / math.sqrt(2)

    @property
    def sensitivity(self) -> float:
        """Smallest received power that can be decoded."""
        return (1 + self.epsilon) * self.beta * self.noise

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "noise": self.noise,
                "epsilon": self.epsilon, "power": self.power}


@dataclass(frozen=True)
class Station:
    id: int
    x: float
    y: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


class GridCoord(NamedTuple):
    i: int
    j: int
    cell: float


class NetworkStats(NamedTuple):
    n: int
    D: int
    Delta: int
    g: float


def _floor_div(value: float, cell: float) -> int:
    return math.floor(Fraction(value) / Fraction(cell))


def box_of(position, cell: float) -> GridCoord:
    """Grid box containing `position`; boxes are closed on the left/bottom."""
    x, y = position
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidArgument(f"non-finite coordinates {position!r}")
    if not math.isfinite(cell) or cell <= 0:
        raise InvalidArgument(f"cell must be positive, got {cell!r}")
    return GridCoord(_floor_div(x, cell), _floor_div(y, cell), cell)


def _axis_gap(a0: int, a1: int, b0: int, b1: int) -> int:
    return max(0, b0 - a1, a0 - b1)


def box_distance_idx(r1, r2) -> int:
    """Box-distance of rectangles given as integer grid spans (i0, j0, i1, j1)."""
    return max(_axis_gap(r1[0], r1[2], r2[0], r2[2]), _axis_gap(r1[1], r1[3], r2[1], r2[3]))


def _on_grid(value: float, cell: float) -> int:
    q = value / cell
    k = round(q)
    if abs(q - k) > 1e-9 * max(1.0, abs(q)):
        raise InvalidArgument(f"coordinate {value} is not a vertex of the grid with cell {cell}")
    return int(k)


def box_distance(r1, r2, cell: float) -> int:
    """Box-distance between axis-aligned rectangles (x0, y0, x1, y1) on grid `cell`."""
    if cell <= 0:
        raise InvalidArgument("cell must be positive")
    a = tuple(_on_grid(v, cell) for v in r1)
    b = tuple(_on_grid(v, cell) for v in r2)
    return box_distance_idx(a, b)


DIR: tuple[tuple[int, int], ...] = tuple(
    (d1, d2)
    for d1 in range(-2, 3)
    for d2 in range(-2, 3)
    if (d1, d2) != (0, 0) and not (abs(d1) == 2 and abs(d2) == 2)
)


def dir_set() -> frozenset:
    return frozenset(DIR)


@dataclass(frozen=True)
class Network:
    params: ModelParams
    stations: tuple[Station, ...]
    source: int
    id_bound: int
    require_connected: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        stations = tuple(sorted(self.stations, key=lambda s: s.id))
        object.__setattr__(self, "stations", stations)
        if not stations:
            raise InvalidArgument("network has no stations")
        seen_ids = set()
        seen_pos = {}
        for s in stations:
            if not isinstance(s.id, int) or not 1 <= s.id <= self.id_bound:
                raise InvalidArgument(f"station id {s.id} outside [1, {self.id_bound}]")
            if s.id in seen_ids:
                raise InvalidArgument(f"duplicate station id {s.id}")
            seen_ids.add(s.id)
            if not (math.isfinite(s.x) and math.isfinite(s.y)):
                raise InvalidArgument(f"station {s.id} has non-finite coordinates")
            if s.position in seen_pos:
                raise ModelViolation(f"stations {seen_pos[s.position]} and {s.id} are coincident")
            seen_pos[s.position] = s.id
        if self.source not in seen_ids:
            raise InvalidArgument(f"source {self.source} is not a station")
        if len(stations) > self.id_bound:
            raise InvalidArgument("more stations than the id bound allows")
        if self.require_connected:
            _check_connected(self)

    @property
    def n(self) -> int:
        return len(self.stations)

    @cached_property
    def ids(self) -> tuple[int, ...]:
        return tuple(s.id for s in self.stations)

    @cached_property
    def index(self) -> dict[int, int]:
        return {s.id: k for k, s in enumerate(self.stations)}

    @cached_property
    def positions(self) -> np.ndarray:
        arr = np.array([[s.x, s.y] for s in self.stations], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def distances(self) -> np.ndarray:
        p = self.positions
        d = np.hypot(p[:, None, 0] - p[None, :, 0], p[:, None, 1] - p[None, :, 1])
        d.setflags(write=False)
        return d

    def station(self, sid: int) -> Station:
        return self.stations[self.index[sid]]

    def dist(self, u: int, v: int) -> float:
        return float(self.distances[self.index[u], self.index[v]])

    def comm_graph(self) -> nx.Graph:
        return comm_graph(self)

    @cached_property
    def neighbors(self) -> dict[int, tuple[int, ...]]:
        g = comm_graph(self)
        return {v: tuple(sorted(g.neighbors(v))) for v in self.ids}

    @cached_property
    def pivotal_boxes(self) -> dict[int, tuple[int, int]]:
        cell = self.params.pivotal
        return {s.id: tuple(box_of(s.position, cell)[:2]) for s in self.stations}

    def with_source(self, source: int) -> "Network":
        return Network(self.params, self.stations, source, self.id_bound, self.require_connected)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "stations": [{"id": s.id, "x": s.x, "y": s.y} for s in self.stations],
            "source": self.source,
            "id_bound": self.id_bound,
        }

    @classmethod
    def from_dict(cls, data: dict, require_connected: bool = True) -> "Network":
        try:
            params = ModelParams(**{k: float(v) for k, v in data["params"].items()})
            stations = tuple(Station(int(s["id"]), float(s["x"]), float(s["y"])) for s in data["stations"])
            return cls(params, stations, int(data["source"]), int(data["id_bound"]), require_connected)
        except (KeyError, TypeError) as exc:
            raise InvalidArgument(f"malformed network description: {exc}") from exc


def _comm_edges(network: Network) -> Iterable[tuple[int, int]]:
    r = network.params.range
    d = network.distances
    ids = network.ids
    iu, ju = np.nonzero(np.triu(d <= r, k=1))
    for a, b in zip(iu.tolist(), ju.tolist()):
        yield ids[a], ids[b]


def comm_graph(network: Network) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(network.ids)
    g.add_edges_from(_comm_edges(network))
    return g


def _check_connected(network: Network) -> None:
    g = comm_graph(network)
    reach = nx.node_connected_component(g, network.source)
    if len(reach) != network.n:
        missing = min(set(network.ids) - reach)
        raise ModelViolation(f"communication graph is disconnected: station {missing} unreachable from source")


def granularity(network: Network) -> float:
    if network.n < 2:
        return 1.0
    d = network.distances + np.diag(np.full(network.n, np.inf))
    return network.params.range / float(d.min())


def stats(network: Network) -> NetworkStats:
    g = comm_graph(network)
    depth = nx.single_source_shortest_path_length(g, network.source)
    if len(depth) != network.n:
        missing = min(set(network.ids) - set(depth))
        raise ModelViolation(f"station {missing} is unreachable from the source")
    delta = max((deg for _, deg in g.degree()), default=0)
    return NetworkStats(network.n, max(depth.values()), delta, granularity(network))


def load_network(path, require_connected: bool = True) -> Network:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"{path}: not valid JSON ({exc})") from exc
    return Network.from_dict(data, require_connected)


def save_network(network: Network, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
