"""Offline partition of one pivotal box into collision-avoiding squares.

All lengths are integers counted in cells of the fine grid G_a, a = gamma/c,
so the computation is exact however small a gets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import networkx as nx

from .geometry import box_distance_idx
from .schedules import _partial_zeta


def avoidance_constant(alpha: float, n: int) -> int:
    """Separation factor c_alpha: squares with side <= d and <= y members need box-distance >= c_alpha*d*y."""
    base = max(1.0, 20.0 * 2.0 ** (alpha / 2.0) * _partial_zeta(alpha - 1.0, max(1, n)))
    return math.ceil(2.0 * base ** (1.0 / alpha))


def phase_count(n_bound: int) -> int:
    """Number of the last phase, ceil(log2 n)."""
    return max(0, math.ceil(math.log2(max(1, n_bound))))


def phase_constants(alpha: float, n_bound: int):
    """Lists d_i and x_i for phases 0..L."""
    ca = avoidance_constant(alpha, n_bound)
    ds, xs = [1], []
    for i in range(phase_count(n_bound) + 1):
        xs.append(ca * ds[i] * 2 ** i)
        ds.append(4 * (xs[i] + ds[i]))
    return ds, xs


def scale(alpha: float, n_bound: int) -> int:
    """Power-of-two c making every color class collision avoiding inside and across boxes."""
    ds, xs = phase_constants(alpha, n_bound)
    last = phase_count(n_bound)
    need = max(2 * ds[last], xs[last])
    c = 1
    while c <= need:
        c *= 2
    return c


def fine_box(position, c: int, gamma: float) -> tuple[int, int]:
    g = Fraction(gamma)
    return (math.floor(Fraction(position[0]) * c / g), math.floor(Fraction(position[1]) * c / g))


@dataclass
class Square:
    ix: int
    iy: int
    side: int
    members: tuple
    color: tuple | None = None

    def span(self):
        return (self.ix, self.iy, self.ix + self.side, self.iy + self.side)


@dataclass
class Coloring:
    c: int
    pivot: tuple
    squares: list
    phases: list = field(default_factory=list)  # per phase: list of (side, member count)
    ds: list = field(default_factory=list)
    xs: list = field(default_factory=list)

    def of(self, sid: int) -> Square:
        for sq in self.squares:
            if sid in sq.members:
                return sq
        raise KeyError(sid)

    def colors(self) -> list:
        return sorted({sq.color for sq in self.squares})


def color_index(color, n_bound: int) -> int:
    i, a, b = color
    return 4 * i + 2 * a + b


def color_count(n_bound: int) -> int:
    return 4 * (phase_count(n_bound) + 1)


def nogran(stations, c: int, gamma: float, alpha: float, n_bound: int) -> Coloring:
    """Partition the stations of one pivotal box into colored squares.

    `stations` is an iterable of (id, position) pairs from a single pivotal box.
    """
    stations = sorted(stations)
    fine = {sid: fine_box(p, c, gamma) for sid, p in stations}
    pivots = {(fx // c, fy // c) for fx, fy in fine.values()}
    if len(pivots) != 1:
        raise ValueError("stations span more than one pivotal box")
    pivot = pivots.pop()
    cells: dict = {}
    for sid, (fx, fy) in fine.items():
        cells.setdefault((fx, fy), []).append(sid)
    current = [Square(fx, fy, 1, tuple(sorted(m))) for (fx, fy), m in sorted(cells.items())]
    ds, xs = phase_constants(alpha, n_bound)
    done: list = []
    phases: list = []
    for i in range(phase_count(n_bound) + 1):
        phases.append([(sq.side, len(sq.members)) for sq in current])
        lo, hi = (2 ** (i - 1) if i else 0), 2 ** i
        wi = [sq for sq in current if lo < len(sq.members) <= hi]
        rest = [sq for sq in current if not lo < len(sq.members) <= hi]
        g = nx.Graph()
        g.add_nodes_from(range(len(wi)))
        for p in range(len(wi)):
            for q in range(p + 1, len(wi)):
                if box_distance_idx(wi[p].span(), wi[q].span()) <= xs[i]:
                    g.add_edge(p, q)
        for comp in sorted(nx.connected_components(g), key=min):
            comp = sorted(comp)
            if len(comp) == 1:
                sq = wi[comp[0]]
                sq.color = (i, pivot[0] % 2, pivot[1] % 2)
                done.append(sq)
                continue
            x0 = min(wi[k].ix for k in comp)
            y0 = min(wi[k].iy for k in comp)
            x1 = max(wi[k].ix + wi[k].side for k in comp)
            y1 = max(wi[k].iy + wi[k].side for k in comp)
            members = tuple(sorted(m for k in comp for m in wi[k].members))
            rest.append(Square(x0, y0, max(x1 - x0, y1 - y0), members))
        current = sorted(rest, key=lambda sq: (sq.ix, sq.iy, sq.members))
    if current:
        raise ValueError("n_bound smaller than the number of stations in the box")
    done.sort(key=lambda sq: (sq.color, sq.ix, sq.iy))
    return Coloring(c, pivot, done, phases, ds, xs)


def check_phase_invariants(col: Coloring) -> list[str]:
    """Violations of the lower member bound and the side bound at every phase start."""
    bad = []
    for i, squares in enumerate(col.phases):
        for side, count in squares:
            if i > 0 and not count > 2 ** (i - 1):
                bad.append(f"phase {i}: square with {count} members")
            if side * 2 ** i > count * col.ds[i]:
                bad.append(f"phase {i}: side {side} exceeds bound for {count} members")
    return bad
