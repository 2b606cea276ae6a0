"""Deterministic network generators.

Every generator keeps pairwise distances at least 1e-6 * range away from the
range itself, so a rounding error cannot decide whether two stations are
neighbors.  Distances are given in multiples of the range unless noted.
"""

from __future__ import annotations

import math
import random

import numpy as np

from .errors import InvalidArgument, ModelViolation
from .geometry import ModelParams, Network, Station

MARGIN = 1e-6


def boundary_clear(points, r: float, margin: float = MARGIN) -> bool:
    p = np.asarray(points, dtype=float)
    if len(p) < 2:
        return True
    d = np.hypot(p[:, None, 0] - p[None, :, 0], p[:, None, 1] - p[None, :, 1])
    iu = np.triu_indices(len(p), k=1)
    return bool(np.all(np.abs(d[iu] - r) > margin * r))


def _ids(n: int, id_bound: int | None, id_seed: int | None) -> list[int]:
    bound = id_bound or n
    if bound < n:
        raise InvalidArgument("id_bound smaller than station count")
    if id_seed is None:
        return list(range(1, n + 1))
    return random.Random(id_seed).sample(range(1, bound + 1), n)


def from_points(points, params: ModelParams | None = None, source_index: int = 0,
                id_bound: int | None = None, id_seed: int | None = None,
                check_margin: bool = True) -> Network:
    params = params or ModelParams()
    pts = [(float(x), float(y)) for x, y in points]
    if check_margin and not boundary_clear(pts, params.range):
        raise ModelViolation("a pairwise distance lies within the numerical margin of the range")
    ids = _ids(len(pts), id_bound, id_seed)
    stations = tuple(Station(i, x, y) for i, (x, y) in zip(ids, pts))
    return Network(params, stations, ids[source_index], id_bound or len(pts))


def chain(k: int, spacing: float = 0.9, params: ModelParams | None = None, **kw) -> Network:
    """k stations on a line, source at the left end."""
    if k < 1:
        raise InvalidArgument("chain needs at least one station")
    params = params or ModelParams()
    r = params.range
    return from_points([(i * spacing * r, 0.0) for i in range(k)], params, **kw)


def grid(w: int, h: int, spacing: float = 0.7, params: ModelParams | None = None, **kw) -> Network:
    """w x h lattice; with spacing below 1/sqrt(2) diagonal neighbors connect."""
    if w < 1 or h < 1:
        raise InvalidArgument("grid needs positive dimensions")
    params = params or ModelParams()
    r = params.range
    return from_points([(i * spacing * r, j * spacing * r) for j in range(h) for i in range(w)], params, **kw)


def cluster(n: int, separation: float, size: int = 2, gap: float = 0.8,
            params: ModelParams | None = None, **kw) -> Network:
    """Clusters of `size` stations `separation` apart, cluster origins `gap` apart on a line."""
    if n < 1 or size < 1:
        raise InvalidArgument("cluster needs n >= 1 and size >= 1")
    params = params or ModelParams()
    r = params.range
    pts = []
    for i in range(n):
        c, j = divmod(i, size)
        pts.append((c * gap * r + j * separation * r, 0.37 * separation * r * (j % 2)))
    return from_points(pts, params, **kw)


def random_connected(n: int, box_count: int, seed: int, params: ModelParams | None = None,
                     min_sep: float | None = None, id_bound: int | None = None,
                     id_seed: int | None = None, attempts: int = 200) -> Network:
    """n stations dropped into a random connected cluster of `box_count` pivotal boxes.

    With `min_sep` (in range units) no two stations are closer than that, and
    one pair is planted at exactly that distance, fixing the granularity to 1/min_sep.
    """
    if n < 1 or box_count < 1:
        raise InvalidArgument("need n >= 1 and box_count >= 1")
    params = params or ModelParams()
    r, gamma = params.range, params.pivotal
    rng = random.Random(seed)
    for _ in range(attempts):
        boxes = [(0, 0)]
        seen = {(0, 0)}
        while len(boxes) < box_count:
            bx, by = rng.choice(boxes)
            dx, dy = rng.choice(((1, 0), (-1, 0), (0, 1), (0, -1)))
            b = (bx + dx, by + dy)
            if b not in seen:
                seen.add(b)
                boxes.append(b)
        pts: list = []
        if min_sep is not None and n >= 2:
            bx, by = boxes[0]
            x = (bx + 0.25 + 0.5 * rng.random() * 0.5) * gamma
            y = (by + 0.25 + 0.5 * rng.random()) * gamma
            pts += [(x, y), (x + min_sep * r, y)]
        tries = 0
        while len(pts) < n and tries < 200 * n:
            tries += 1
            bx, by = boxes[len(pts) % box_count] if len(pts) < box_count else rng.choice(boxes)
            p = ((bx + rng.random()) * gamma, (by + rng.random()) * gamma)
            if min_sep is not None:
                if any(math.hypot(p[0] - q[0], p[1] - q[1]) < min_sep * r for q in pts):
                    continue
            pts.append(p)
        if len(pts) < n or not boundary_clear(pts, r):
            continue
        try:
            return from_points(pts, params, source_index=0, id_bound=id_bound, id_seed=id_seed)
        except ModelViolation:
            continue
    raise ModelViolation(f"no connected placement found after {attempts} attempts")


def strip(n: int, length: int, width: int = 1, seed: int = 0, min_sep: float | None = None,
          params: ModelParams | None = None, id_bound: int | None = None, attempts: int = 200) -> Network:
    """n stations scattered over a `length` x `width` block of pivotal boxes.

    Like random_connected, `min_sep` plants one pair at exactly that distance
    and keeps all others at least that far apart.
    """
    if n < 2 or length < 1 or width < 1:
        raise InvalidArgument("strip needs n >= 2 and a positive size")
    params = params or ModelParams()
    r, gamma = params.range, params.pivotal
    rng = random.Random(seed)
    for _ in range(attempts):
        x, y = 0.3 * gamma, 0.5 * gamma
        pts = [(x, y), (x + (min_sep or 0.1) * r, y)]
        tries = 0
        while len(pts) < n and tries < 200 * n:
            tries += 1
            p = (rng.random() * length * gamma, rng.random() * width * gamma)
            if min_sep is not None and any(math.hypot(p[0] - q[0], p[1] - q[1]) < min_sep * r for q in pts):
                continue
            pts.append(p)
        if len(pts) < n or not boundary_clear(pts, r):
            continue
        try:
            return from_points(pts, params, id_bound=id_bound)
        except ModelViolation:
            continue
    raise ModelViolation(f"no connected strip found after {attempts} attempts")


def box_chain(boxes: int, occupancy: int, params: ModelParams | None = None,
              tight_pair: float | None = None, seed: int = 0, **kw) -> Network:
    """`boxes` consecutive pivotal boxes, each holding `occupancy` stations near its center.

    Stations of adjacent boxes are all in range, boxes two apart are not, so the
    eccentricity is boxes - 1.  `tight_pair` adds a station that far (range
    units) from the first one.
    """
    params = params or ModelParams()
    r, gamma = params.range, params.pivotal
    rng = random.Random(seed)
    pts = []
    for b in range(boxes):
        cx, cy = (b + 0.5) * gamma, 0.5 * gamma
        for _ in range(occupancy):
            pts.append((cx + (rng.random() - 0.5) * 0.2 * gamma, cy + (rng.random() - 0.5) * 0.2 * gamma))
        if tight_pair is not None and b == 0:
            x, y = pts[0]
            pts.append((x + tight_pair * r, y))
    return from_points(pts, params, **kw)


def clique_chain(cliques: int, size: int, params: ModelParams | None = None,
                 margin: float = 0.02, id_bound: int | None = None) -> Network:
    """Chain of cliques where only one station of each clique reaches the next one.

    Clique k occupies one pivotal box.  Its top-id station sits at the right
    edge and is the only one in range of the left-edge station of clique k+1.
    A single trailing station closes the chain.  Eccentricity is 2*cliques.
    """
    if cliques < 1 or size < 2:
        raise InvalidArgument("need at least one clique of size >= 2")
    params = params or ModelParams()
    r, gamma = params.range, params.pivotal
    step = 2 * gamma
    width = step - r * (1 - margin)
    if width >= gamma:
        raise InvalidArgument("clique width exceeds a pivotal box")
    pts = []
    ids = []
    nid = 1
    for k in range(cliques):
        x0 = k * step + 0.5 * (gamma - width)
        y0 = 0.5 * gamma
        inner = [(x0 + width * (j + 1) / size * 0.5, y0 + (0.1 * gamma) * ((j % 3) - 1)) for j in range(size - 2)]
        entry = (x0, y0)
        exit_ = (x0 + width, y0)
        block = [entry] + inner + [exit_]
        for p in block:
            pts.append(p)
            ids.append(nid)
            nid += 1
    pts.append((cliques * step + 0.5 * (gamma - width), 0.5 * gamma))
    ids.append(nid)
    bound = id_bound or nid
    if not boundary_clear(pts, r):
        raise ModelViolation("clique chain too close to the range boundary")
    stations = tuple(Station(i, x, y) for i, (x, y) in zip(ids, pts))
    return Network(params, stations, 1, bound)
