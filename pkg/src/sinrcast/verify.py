"""Trace checks that do not rely on the simulator.

The reception replay recomputes every round from raw coordinates and the
model parameters; the other checks read program snapshots.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import InvalidArgument
from .geometry import DIR, Network


@dataclass
class CheckResult:
    name: str
    ok: bool | None  # None: the trace lacks the data this check needs
    detail: str = ""
    checked: int = 0

    def line(self) -> str:
        status = {True: "PASS", False: "FAIL", None: "UNSUPPORTED"}[self.ok]
        return f"{status} {self.name}: {self.detail}" if self.detail else f"{status} {self.name}"


@dataclass
class Report:
    results: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.ok is not False for r in self.results)

    def add(self, res: CheckResult) -> None:
        self.results.append(res)

    def lines(self) -> list:
        return [r.line() for r in self.results]


# ---------------------------------------------------------------- replay

def _pivot_box(x: float, y: float, gamma: float):
    return (math.floor(x / gamma), math.floor(y / gamma))


def replay(records, network: Network) -> CheckResult:
    """Recompute each recorded round's deliveries with the raw reception rule."""
    p = network.params
    pos = {s.id: (s.x, s.y) for s in network.stations}
    ids = sorted(pos)
    sens = (1 + p.epsilon) * p.beta * p.noise
    for rnd, senders, deliveries in records:
        want = set()
        tx = list(senders)
        txset = set(tx)
        for r in ids:
            if r in txset:
                continue
            rx, ry = pos[r]
            powers = []
            for s in tx:
                sx, sy = pos[s]
                powers.append(p.power * ((sx - rx) ** 2 + (sy - ry) ** 2) ** (-p.alpha / 2))
            total = math.fsum(powers)
            for s, pw in zip(tx, powers):
                if pw >= sens and pw / (p.noise + (total - pw)) >= p.beta:
                    want.add((r, s))
        got = set(map(tuple, deliveries))
        if got != want:
            missing = sorted(want - got)[:3]
            extra = sorted(got - want)[:3]
            return CheckResult("replay", False, f"round {rnd}: missing {missing} extra {extra}")
    return CheckResult("replay", True, f"{len(records)} rounds", len(records))


# ---------------------------------------------------------------- helpers

def _boundary_snaps(trace):
    start, period = trace.meta.get("boundary_start"), trace.meta.get("period")
    if start is None or not period:
        return []
    return [(r, st) for r, st in trace.snapshots if r >= start and (r - start) % period == 0]


def _boxes(network: Network) -> dict:
    g = network.params.pivotal
    return {s.id: _pivot_box(s.x, s.y, g) for s in network.stations}


def _adjacency(network: Network) -> dict:
    r = network.params.range
    pts = [(s.id, s.x, s.y) for s in network.stations]
    adj = {i: set() for i, _, _ in pts}
    for a in range(len(pts)):
        ia, xa, ya = pts[a]
        for b in range(a + 1, len(pts)):
            ib, xb, yb = pts[b]
            if math.hypot(xa - xb, ya - yb) <= r:
                adj[ia].add(ib)
                adj[ib].add(ia)
    return adj


# ---------------------------------------------------------------- local-knowledge checks

def check_box_states(trace, network: Network) -> CheckResult:
    """All stations of a pivotal box share one state at every phase boundary."""
    snaps = _boundary_snaps(trace)
    if not snaps or "state" not in next(iter(snaps[0][1].values()), {}):
        return CheckResult("box-state-uniformity", None, "needs boundary snapshots with states")
    boxes = _boxes(network)
    for rnd, states in snaps:
        seen: dict = {}
        for sid, st in states.items():
            b = boxes[sid]
            if seen.setdefault(b, st["state"]) != st["state"]:
                return CheckResult("box-state-uniformity", False, f"round {rnd}: box {b} mixes states")
    return CheckResult("box-state-uniformity", True, f"{len(snaps)} boundaries", len(snaps))


def check_phase_progress(trace, network: Network) -> CheckResult:
    """Every box neighboring a box active at a phase start is informed at the phase end."""
    snaps = _boundary_snaps(trace)
    if len(snaps) < 2:
        return CheckResult("phase-progress", None, "needs at least two boundary snapshots")
    boxes = _boxes(network)
    adj = _adjacency(network)
    members: dict = {}
    for sid, b in boxes.items():
        members.setdefault(b, []).append(sid)
    near = {b: {boxes[u] for v in m for u in adj[v]} - {b} for b, m in members.items()}
    checked = 0
    for (r0, s0), (r1, s1) in zip(snaps, snaps[1:]):
        active = {boxes[v] for v, st in s0.items() if st["state"] == "active"}
        for b in active:
            for nb in near[b]:
                checked += 1
                bad = [v for v in members[nb] if not s1[v]["informed"]]
                if bad:
                    return CheckResult("phase-progress", False,
                                       f"phase starting {r0}: box {nb} next to active {b} has uninformed {bad[:3]}")
    return CheckResult("phase-progress", True, f"{checked} box pairs", checked)


def check_coloring(network: Network, n_bound: int) -> list:
    """Square invariants and same-color separation for the offline partition of every box."""
    from .nogran import check_phase_invariants, nogran, scale

    p = network.params
    c = scale(p.alpha, n_bound)
    boxes = _boxes(network)
    by_box: dict = {}
    for s in network.stations:
        by_box.setdefault(boxes[s.id], []).append((s.id, s.position))
    cols = {b: nogran(st, c, p.pivotal, p.alpha, n_bound) for b, st in sorted(by_box.items())}
    bad_inv = []
    for b, col in cols.items():
        bad_inv += [f"box {b}: {m}" for m in check_phase_invariants(col)]
        members = sorted(m for sq in col.squares for m in sq.members)
        if members != sorted(i for i, _ in by_box[b]):
            bad_inv.append(f"box {b}: stations not covered exactly once")
    inv = CheckResult("square-invariants", not bad_inv, "; ".join(bad_inv[:3]) or f"{len(cols)} boxes")

    g = Fraction(p.pivotal)

    def cell(q):
        return (math.floor(Fraction(q[0]) * c / g), math.floor(Fraction(q[1]) * c / g))

    pos = {s.id: s.position for s in network.stations}
    squares = []
    for b, col in cols.items():
        for sq in col.squares:
            cells = [cell(pos[m]) for m in sq.members]
            hull = (min(x for x, _ in cells), min(y for _, y in cells),
                    max(x for x, _ in cells) + 1, max(y for _, y in cells) + 1)
            squares.append((b, sq, hull, col.xs))
    bad = []
    pairs = 0
    for i in range(len(squares)):
        b1, q1, h1, xs = squares[i]
        for j in range(i + 1, len(squares)):
            b2, q2, h2, _ = squares[j]
            if q1.color != q2.color:
                continue
            pairs += 1
            x = xs[q1.color[0]]
            span1, span2 = (q1.span(), q2.span()) if b1 == b2 else (h1, h2)
            gap = max(_gap(span1[0], span1[2], span2[0], span2[2]), _gap(span1[1], span1[3], span2[1], span2[3]))
            if gap <= x:
                bad.append(f"color {q1.color}: squares in boxes {b1},{b2} only {gap} cells apart (need > {x})")
    sep = CheckResult("collision-avoidance", not bad, bad[0] if bad else f"{pairs} same-color pairs", pairs)
    return [inv, sep]


def _gap(a0, a1, b0, b1) -> int:
    if a1 <= b0:
        return b0 - a1
    if b1 <= a0:
        return a0 - b1
    return 0


# ---------------------------------------------------------------- SizeUBr checks

def _master(v, M, limit):
    seen = set()
    while M[v] != v:
        if v in seen or len(seen) > limit:
            return None
        seen.add(v)
        v = M[v]
    return v


def check_groups(trace, network: Network) -> list:
    """Forest, integrity (a)-(c) and match symmetry at every block boundary."""
    snaps = _boundary_snaps(trace)
    if not snaps or "M" not in next(iter(snaps[0][1].values()), {}):
        na = "needs block-boundary snapshots with group state"
        return [CheckResult(n, None, na) for n in ("forest", "integrity", "match-symmetry")]
    boxes = _boxes(network)
    n = len(boxes)
    errs = {"forest": None, "integrity": None, "match-symmetry": None}
    for rnd, st in snaps:
        M = {v: s["M"] for v, s in st.items()}
        L = {v: s["L"] for v, s in st.items()}
        G = {v: set(s["G"]) for v, s in st.items()}
        if errs["forest"] is None:
            for v in st:
                root = _master(v, M, n)
                if root is None or L[root] is not True or (L[v] and M[v] != v):
                    errs["forest"] = f"round {rnd}: station {v} has no leader root"
                    break
        if errs["integrity"] is None:
            cover: dict = {}
            for v in st:
                if L[v]:
                    for u in G[v]:
                        cover[u] = cover.get(u, 0) + 1
            if set(cover) != set(st) or any(c != 1 for c in cover.values()):
                errs["integrity"] = f"round {rnd}: leader groups do not partition the stations"
            for v in st:
                if errs["integrity"]:
                    break
                if not G[v] <= G[M[v]]:
                    errs["integrity"] = f"round {rnd}: group of {v} not inside its master's"
                elif boxes[M[v]] != boxes[v] or any(boxes[u] != boxes[v] for u in G[v]):
                    errs["integrity"] = f"round {rnd}: station {v} points outside its box"
        if errs["match-symmetry"] is None:
            for v, s in st.items():
                u = s.get("match")
                if u is None:
                    continue
                if st[u].get("match") != v or L[u] == L[v]:
                    errs["match-symmetry"] = f"round {rnd}: match {v}-{u} not symmetric"
                    break
    return [CheckResult(k, e is None, e or f"{len(snaps)} boundaries", len(snaps)) for k, e in errs.items()]


@dataclass(frozen=True)
class ProgressSnapshot:
    informed: int
    merged: int
    tuples: int
    stable_blocks: int

    @property
    def pi(self) -> int:
        return self.informed + self.merged + self.tuples + self.stable_blocks


def _consistent(v, st, M, G):
    root = _master(v, M, len(st))
    return root is not None and M[v] == root and G[v] == G[root]


def _progress_all(trace, network: Network) -> list:
    snaps = _boundary_snaps(trace)
    if not snaps or "M" not in next(iter(snaps[0][1].values()), {}):
        raise InvalidArgument("progress needs block-boundary snapshots from a SizeUBr run")
    boxes = _boxes(network)
    n = len(boxes)
    dirs = DIR
    out = []
    stable = 0
    for rnd, st in snaps:
        M = {v: s["M"] for v, s in st.items()}
        G = {v: frozenset(s["G"]) for v, s in st.items()}
        informed = [v for v, s in st.items() if s["informed"]]
        groups = sum(1 for v in st if M[v] == v)
        inf_boxes = {boxes[v] for v in informed}
        tuples = sum(1 for v in informed for d1, d2 in dirs
                     if (boxes[v][0] + d1, boxes[v][1] + d2) in inf_boxes)
        out.append(ProgressSnapshot(len(informed), n - groups, tuples, stable))
        # is the block opening here partially stable?
        per_box: dict = {}
        for v in informed:
            if st[v]["L"]:
                per_box[boxes[v]] = per_box.get(boxes[v], 0) + 1
        if all(c <= 1 for c in per_box.values()) and any(not _consistent(v, st, M, G) for v in informed):
            stable += 1
    return out


def progress_series(trace, network: Network) -> list:
    """Progress at the end of each block: entry j is computed from the snapshot opening block j+1."""
    return _progress_all(trace, network)[1:]


def progress(trace, block: int, network: Network | None = None) -> ProgressSnapshot:
    series = progress_series(trace, network or trace.network)
    if not 0 <= block < len(series):
        raise InvalidArgument(f"no snapshot closes block {block}")
    return series[block]


def check_progress(trace, network: Network) -> list:
    """Progress never drops, and every window opening with uninformed stations gains its length."""
    try:
        series = progress_series(trace, network)
    except InvalidArgument as exc:
        return [CheckResult("progress-monotone", None, str(exc)), CheckResult("progress-window", None, str(exc))]
    snaps = _boundary_snaps(trace)
    pis = [p.pi for p in _progress_all(trace, network)]
    mono = all(b >= a for a, b in zip(pis, pis[1:]))
    drop = next((j for j, (a, b) in enumerate(zip(pis, pis[1:])) if b < a), None)
    res = [CheckResult("progress-monotone", mono, f"drop in block {drop}" if not mono else f"{len(series)} blocks")]
    uninformed_at = [sum(1 for s in st.values() if not s["informed"]) for _, st in snaps]
    bad = None
    for j in range(len(series)):
        if uninformed_at[j] == 0:
            continue
        if not any(pis[k + 1] - pis[j] >= k - j + 1 for k in range(j, len(series))):
            bad = j
            break
    res.append(CheckResult("progress-window", bad is None,
                           f"block {bad} has no window with enough progress" if bad is not None
                           else f"{len(series)} blocks"))
    return res


# ---------------------------------------------------------------- leader election checks

def election_records(trace) -> list:
    """Per execution: {station: summary} for its participants."""
    snaps = _boundary_snaps(trace)
    out: dict = {}
    for rnd, st in snaps:
        for v, s in st.items():
            last = s.get("last")
            if last:
                out.setdefault(last["start"], {})[v] = last
    return [out[k] for k in sorted(out)]


def check_elections(trace, network: Network) -> list:
    execs = election_records(trace)
    if not execs:
        na = "needs boundary snapshots of an election run"
        return [CheckResult(n, None, na) for n in ("one-leader-per-box", "halving", "top-class-spacing")]
    boxes = _boxes(network)
    pos = {s.id: s.position for s in network.stations}
    nhat = trace.meta.get("params", {}).get("resolved", {}).get("nhat") or network.n
    sep = network.params.range / nhat
    lead_err = halve_err = space_err = None
    for ex in execs:
        per: dict = {}
        for v, s in ex.items():
            per.setdefault(boxes[v], []).append(v)
        for b, vs in per.items():
            leaders = [v for v in vs if ex[v]["state"] == "leader"]
            if len(leaders) != 1 and lead_err is None:
                lead_err = f"execution at {ex[vs[0]]['start']}: box {b} has {len(leaders)} leaders"
            phs = {v: ex[v]["ph"] for v in vs}
            top = max(phs.values())
            for l in range(top + 1):
                a = sum(1 for v in vs if phs[v] > l)
                c = sum(1 for v in vs if phs[v] > l + 1)
                if c > a // 2 and halve_err is None:
                    halve_err = f"box {b}: |V(l+1)|={c} > |V(l)|/2={a}/2 at l={l}"
            top_class = sorted(v for v in vs if phs[v] == top)
            for u, w in itertools.combinations(top_class, 2):
                if math.dist(pos[u], pos[w]) < sep and space_err is None:
                    space_err = f"box {b}: top class stations {u},{w} closer than range/{nhat}"
    return [CheckResult("one-leader-per-box", lead_err is None, lead_err or f"{len(execs)} executions"),
            CheckResult("halving", halve_err is None, halve_err or f"{len(execs)} executions"),
            CheckResult("top-class-spacing", space_err is None, space_err or f"{len(execs)} executions")]


def check_announcements(trace, network: Network) -> CheckResult:
    """Each election leader reaches all its neighbors in its announcement round."""
    execs = election_records(trace)
    if not execs or not trace.records:
        return CheckResult("announcements", None, "needs recorded rounds and election snapshots")
    adj = _adjacency(network)
    leaders = {v for ex in execs for v, s in ex.items() if s["state"] == "leader"}
    heard: dict = {}
    for rnd, senders, deliveries in trace.records:
        if len(senders) and set(senders) & leaders:
            for to, frm in deliveries:
                heard.setdefault((rnd, frm), set()).add(to)
    # the announcement is the leader's last transmission in its execution
    last_tx: dict = {}
    for rnd, senders, _ in trace.records:
        for s in senders:
            if s in leaders:
                last_tx.setdefault(s, []).append(rnd)
    for v in sorted(leaders):
        rounds = last_tx.get(v, [])
        ok = any(adj[v] <= heard.get((rr, v), set()) for rr in rounds)
        if not ok:
            return CheckResult("announcements", False, f"leader {v} never reached all neighbors at once")
    return CheckResult("announcements", True, f"{len(leaders)} leaders", len(leaders))


# ---------------------------------------------------------------- driver

def verify(trace, network: Network) -> Report:
    rep = Report()
    rep.add(replay(trace.records, network))
    proto = trace.meta.get("protocol")
    if proto in ("gran-ubr", "diam-ubr"):
        rep.add(check_box_states(trace, network))
        rep.add(check_phase_progress(trace, network))
        if proto == "diam-ubr":
            nb = trace.meta.get("params", {}).get("n_bound") or network.n
            for r in check_coloring(network, nb):
                rep.add(r)
    elif proto == "size-ubr":
        for r in check_groups(trace, network) + check_progress(trace, network):
            rep.add(r)
    elif proto in ("general", "leader-election"):
        for r in check_elections(trace, network):
            rep.add(r)
        rep.add(check_announcements(trace, network))
    if trace.flags:
        rep.add(CheckResult("program-flags", False, trace.flags[0]))
    return rep
