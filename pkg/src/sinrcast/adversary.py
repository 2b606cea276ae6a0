"""Lower-bound network families and the adaptive adversary that measures them.

Two families:

* chain gadgets: s, two relays v1, v2 and w, placed so that w hears either
  relay alone but neither when both transmit; gadgets compose by using w as
  the next source.
* fans: s, a row of Delta relays and one far node w_j heard only from v_j.
  Members differ only in j.  More than c = ceil(2^(alpha/2)) relays
  transmitting together block every w.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from .engine import Message, Protocol, StationProgram, run
from .errors import ConstructionError, ContractViolation, InvalidArgument
from .geometry import ModelParams, Network, Station, comm_graph, granularity, save_network

MARGIN = 1e-6
W_MARGIN = 1e-5


def _gain(params: ModelParams, a, b) -> float:
    return params.power * math.dist(a, b) ** (-params.alpha)


def _hears(params: ModelParams, tx_positions, sender_pos, rx) -> bool:
    """Reception rule evaluated from coordinates alone."""
    sig = _gain(params, sender_pos, rx)
    rest = math.fsum(_gain(params, q, rx) for q in tx_positions if q != sender_pos)
    return sig >= params.sensitivity and sig / (params.noise + rest) >= params.beta


# ---------------------------------------------------------------- chain gadgets

@dataclass
class ChainGadget:
    source: tuple
    v1: tuple
    v2: tuple
    w: tuple
    ids: tuple  # (v1 id, v2 id)
    depth: int


def _bisect(f, lo, hi, rel=1e-12):
    flo = f(lo)
    if flo == 0:
        return lo
    if (flo > 0) == (f(hi) > 0):
        raise ConstructionError("no sign change on the search interval")
    while hi - lo > rel * abs(hi):
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0) == (flo > 0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gadget_geometry(params: ModelParams, span: float = 1.5, relay: float = 0.75, angle: float = math.pi / 6):
    """Offsets (v1, v2, w) from the source, in absolute units."""
    if params.beta != 1:
        raise InvalidArgument("the chain gadget needs beta = 1")
    r = params.range
    P, noise = params.power, params.noise
    d1 = (span - relay) * r
    s1 = P * d1 ** (-params.alpha)
    # v2 is closer to w: P d2^-a = P d1^-a + noise/2
    d2 = _bisect(lambda d: P * d ** (-params.alpha) - s1 - noise / 2, 1e-9 * r, d1)
    w = (span * r, 0.0)
    v1 = (relay * r, 0.0)
    v2 = (w[0] - d2 * math.cos(angle), d2 * math.sin(angle))
    checks = {
        "s-v1": (math.dist((0, 0), v1), True), "s-v2": (math.dist((0, 0), v2), True),
        "v1-w": (math.dist(v1, w), True), "v2-w": (math.dist(v2, w), True),
        "s-w": (math.dist((0, 0), w), False),
    }
    bad = [f"{k}={d / r:.6f}r" for k, (d, inside) in checks.items()
           if (d <= r * (1 - MARGIN)) != inside or abs(d - r) <= MARGIN * r]
    if bad:
        raise ConstructionError("gadget range relations fail: " + ", ".join(bad))
    return v1, v2, w


def build_chain_family(D: int, N: int | None = None, params: ModelParams | None = None,
                       ids=None) -> Network:
    """D composed gadgets.  `ids` lists station ids in placement order (s, then v1, v2, w per gadget)."""
    if D < 1:
        raise InvalidArgument("D must be >= 1")
    params = params or ModelParams()
    v1, v2, w = gadget_geometry(params)
    pts = [(0.0, 0.0)]
    for k in range(D):
        ox = k * w[0]
        pts += [(ox + v1[0], v1[1]), (ox + v2[0], v2[1]), (ox + w[0], w[1])]
    n = len(pts)
    N = N or n
    ids = list(ids) if ids is not None else list(range(1, n + 1))
    if len(ids) != n or len(set(ids)) != n or not all(1 <= i <= N for i in ids):
        raise InvalidArgument("ids must be distinct values in [1, N], one per station")
    net = Network(params, tuple(Station(i, x, y) for i, (x, y) in zip(ids, pts)), ids[0], N)
    bad = check_chain_blocking(net, D)
    if bad:
        raise ConstructionError("; ".join(bad[:3]))
    return net


def chain_gadgets(net: Network, D: int) -> list:
    by_pos = {s.position: s.id for s in net.stations}
    v1, v2, w = gadget_geometry(net.params)
    out = []
    for k in range(D):
        ox = k * w[0]
        a, b = (ox + v1[0], v1[1]), (ox + v2[0], v2[1])
        out.append(ChainGadget((ox, 0.0), a, b, (ox + w[0], w[1]), (by_pos.get(a), by_pos.get(b)), k))
    return out


def check_chain_blocking(net: Network, D: int) -> list:
    """Violations of: both relays together never reach w, each relay alone does."""
    p = net.params
    bad = []
    for g in chain_gadgets(net, D):
        both = [g.v1, g.v2]
        if _hears(p, both, g.v1, g.w) or _hears(p, both, g.v2, g.w):
            bad.append(f"gadget {g.depth}: w decodes a simultaneous transmission")
        for v in both:
            if not _hears(p, [v], v, g.w):
                bad.append(f"gadget {g.depth}: lone relay at {v} does not reach w")
    return bad


# ---------------------------------------------------------------- fans

def block_size(alpha: float) -> int:
    return math.ceil(2 ** (alpha / 2))


@dataclass
class FanFamily:
    delta: int
    D: int
    params: ModelParams
    N: int | None = None
    margin: float = W_MARGIN
    ids: list | None = None

    @property
    def layers(self) -> int:
        return max(1, (self.D - 1) // 2)

    @property
    def c(self) -> int:
        return block_size(self.params.alpha)

    @property
    def scale(self) -> float:
        return self.params.range

    @property
    def size(self) -> int:
        return self.layers * (self.delta + 1) + 1

    def bound_per_layer(self) -> int:
        return self.delta // self.c - 1

    def points(self, choices) -> list:
        """Placement order: s, then per layer v_0..v_{Delta-1}, w."""
        r, g, dl = self.scale, 1 / math.sqrt(2), self.delta
        sx, sy = 0.0, 0.0
        pts = [(sx, sy)]
        for j in choices:
            pts += [(sx + r * g * i / dl, sy + r * g) for i in range(dl)]
            sx, sy = sx + r * g * j / dl, sy + r * (g + 1 - self.margin)
            pts.append((sx, sy))
        return pts

    def layer_ids(self, layer: int):
        """(relay ids, w id) of a layer."""
        ids = self.id_list()
        base = 1 + layer * (self.delta + 1)
        return ids[base:base + self.delta], ids[base + self.delta]

    def id_list(self) -> list:
        return list(self.ids) if self.ids is not None else list(range(1, self.size + 1))

    def member(self, choices) -> Network:
        choices = list(choices) + [0] * (self.layers - len(choices))
        pts = self.points(choices)
        ids = self.id_list()
        N = self.N or self.size
        return Network(self.params, tuple(Station(i, x, y) for i, (x, y) in zip(ids, pts)), ids[0], N)


def build_fan_family(delta: int, D: int, params: ModelParams | None = None, N: int | None = None,
                     ids=None, samples: int = 2000, seed: int = 0) -> FanFamily:
    if delta < 4 or D < 3:
        raise InvalidArgument("fans need Delta >= 4 and D >= 3")
    params = params or ModelParams()
    fam = FanFamily(delta, D, params, N, ids=ids)
    if ids is not None and (len(ids) != fam.size or len(set(ids)) != fam.size):
        raise InvalidArgument("ids must list one distinct id per station")
    bad = check_fan_reachability(fam) + check_fan_blocking(fam, fam.c + 1, samples, seed)
    if bad:
        raise ConstructionError("; ".join(bad[:3]))
    return fam


def check_fan_reachability(fam: FanFamily) -> list:
    """Every relay hears s, w_j hears only v_j, across all members of one layer."""
    bad = []
    r = fam.params.range
    for j in range(fam.delta):
        net = fam.member([j])
        g = comm_graph(net)
        pts = fam.points([j] + [0] * (fam.layers - 1))
        for a, b in itertools.combinations(range(len(pts)), 2):
            if abs(math.dist(pts[a], pts[b]) - r) <= MARGIN * r:
                bad.append(f"member {j}: a distance is within the margin of the range")
                break
        relays, w = fam.layer_ids(0)
        s = net.source
        if any(not g.has_edge(s, v) for v in relays):
            bad.append(f"member {j}: a relay is out of the source's range")
        if set(g.neighbors(w)) - set(fam.layer_ids(1)[0] if fam.layers > 1 else ()) != {relays[j]}:
            bad.append(f"member {j}: w is not reachable from v_{j} alone")
    return bad


def check_fan_blocking(fam: FanFamily, size: int, samples: int = 2000, seed: int = 0) -> list:
    """Transmit sets of `size` relays that let some w_j decode (exhaustive for Delta <= 12)."""
    p = fam.params
    pts = fam.points([0])
    relays = pts[1:1 + fam.delta]
    ws = [fam.points([j])[-1] for j in range(fam.delta)]
    if fam.delta <= 12:
        sets = itertools.combinations(range(fam.delta), size)
    else:
        rng = random.Random(seed)
        sets = (tuple(rng.sample(range(fam.delta), size)) for _ in range(samples))
    bad = []
    for T in sets:
        tx = [relays[i] for i in T]
        for j, w in enumerate(ws):
            if any(_hears(p, tx, relays[i], w) for i in T):
                bad.append(f"w_{j} decodes with relays {list(T)} transmitting")
    return bad


def export_family(fam: FanFamily, outdir) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for j in range(fam.delta):
        name = f"fan_{j}.json"
        save_network(fam.member([j] * fam.layers), out / name)
        files.append({"file": name, "w_position": j})
    manifest = {"family": "fan", "delta": fam.delta, "D": fam.D, "layers": fam.layers,
                "c": fam.c, "params": fam.params.to_dict(), "members": files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return out / "manifest.json"


# ---------------------------------------------------------------- probe programs

class _Probe(StationProgram):
    def on_receive(self, t, msg):
        if msg.data and not self.informed:
            self.informed = True
            self.wake = t + 1

    def _msg(self):
        return Message("probe", self.id, self.view.position, True)


class _AllProgram(_Probe):
    def on_round(self, t):
        self.wake = t + 1
        return self._msg()


class _TurnProgram(_Probe):
    def on_round(self, t):
        turn = self.id - 1
        msg = self._msg() if t in (0, turn) else None
        self.wake = turn if turn > t else None
        return msg


class AllTransmit(Protocol):
    """Every informed station transmits in every round."""

    name = "probe-all"

    def program(self, view):
        return _AllProgram(view)


class TakeTurns(Protocol):
    """The source speaks in round 0; station with id k speaks in round k-1 if informed by then."""

    name = "probe-turns"

    def program(self, view):
        return _TurnProgram(view)


# ---------------------------------------------------------------- adversary

@dataclass
class LayerOutcome:
    layer: int
    informed_round: dict  # member j -> round w_j was informed (None if never)
    eliminated_round: dict  # member j -> round the adversary drops it
    chosen: int
    forced: int | None
    start: int


@dataclass
class AdversaryResult:
    family: str
    delta: int
    D: int
    algorithm: str
    forced_rounds: int | None
    bound: int
    layers: list = field(default_factory=list)
    trace: object = None

    def row(self) -> dict:
        return {"family": self.family, "delta": self.delta, "D": self.D, "algorithm": self.algorithm,
                "forced_rounds": self.forced_rounds if self.forced_rounds is not None else "inf",
                "bound": self.bound}


def _tx_rounds(trace, exclude):
    return [(t, tuple(sorted(set(s) - exclude))) for t, s, _ in trace.records if set(s) - exclude]


def adversary_run(factory, fam: FanFamily, max_rounds: int = 10 ** 8, name: str | None = None,
                  check_determinism: bool | None = None) -> AdversaryResult:
    """Run every member layer by layer and keep the member whose w is informed last.

    For programs without neighbor knowledge the members share one history until
    their w hears something, so keeping the last-informed member is exactly the
    adversary that drops the members of every round with at most c relays
    transmitting.  That equivalence is checked on the recorded transmissions.
    """
    make = factory if callable(factory) and not isinstance(factory, Protocol) else (lambda: factory)
    proto0 = make()
    local = bool(getattr(proto0, "local_knowledge", False))
    if check_determinism is None:
        check_determinism = not local
    name = name or getattr(proto0, "name", "program")
    choices: list = []
    layers = []
    prev = -1
    last_trace = None
    for layer in range(fam.layers):
        relays, w = fam.layer_ids(layer)
        informed, traces = {}, {}
        for j in range(fam.delta):
            net = fam.member(choices + [j])
            tr = run(net, make(), max_rounds, stop="informed")
            informed[j] = tr.informed_at.get(w)
            traces[j] = tr
        elim = _eliminate(traces, informed, relays, fam.c, fam.delta, w, check_determinism)
        never = [j for j in range(fam.delta) if informed[j] is None]
        chosen = never[0] if never else max(range(fam.delta), key=lambda j: (informed[j], -j))
        forced = None if never else informed[chosen]
        layers.append(LayerOutcome(layer, informed, elim, chosen, forced, prev))
        choices.append(chosen)
        last_trace = traces[chosen]
        if forced is None:
            break
        prev = forced
    total = layers[-1].forced if len(layers) == fam.layers else None
    return AdversaryResult("fan", fam.delta, fam.D, name, total, fam.layers * fam.bound_per_layer(),
                           layers, last_trace)


def _eliminate(traces, informed, relays, c, delta, w, check):
    """Adversary drop rounds from the shared history; checks the history really is shared."""
    index = {v: i for i, v in enumerate(relays)}
    when = {j: math.inf if x is None else x for j, x in informed.items()}
    ref_j = max(traces, key=lambda j: when[j])
    ref = traces[ref_j]
    if check:
        for j, tr in traces.items():
            stop = min(when[j], when[ref_j])
            a = [x for x in _tx_rounds(tr, {w}) if x[0] <= stop]
            b = [x for x in _tx_rounds(ref, {w}) if x[0] <= stop]
            if a != b:
                k = next((i for i, (x, y) in enumerate(zip(a, b)) if x != y), min(len(a), len(b)))
                rnd = (a[k] if k < len(a) else b[k])[0]
                raise ContractViolation(f"members {j} and {ref_j} diverge in round {rnd} before their w heard anything")
    dropped: dict = {}
    for t, senders, _ in ref.records:
        T = [index[s] for s in senders if s in index]
        if T and len(T) <= c:
            for i in T:
                dropped.setdefault(i, t)
    if check:
        for j in range(delta):
            if informed[j] is not None and (j not in dropped or informed[j] < dropped[j]):
                raise ContractViolation(f"w_{j} informed in round {informed[j]} before the adversary dropped it")
    return dropped


def id_search(factory, D: int, N: int, params: ModelParams | None = None, trials: int = 10,
              seed: int = 0, max_rounds: int = 10 ** 8):
    """Largest completion round over random id assignments of a D-gadget chain."""
    rng = random.Random(seed)
    n = 3 * D + 1
    make = factory if callable(factory) and not isinstance(factory, Protocol) else (lambda: factory)
    best = (-1, None)
    for _ in range(trials):
        ids = rng.sample(range(1, N + 1), n)
        net = build_chain_family(D, N, params, ids)
        tr = run(net, make(), max_rounds, stop="informed")
        rounds = tr.rounds if tr.complete else math.inf
        if rounds > best[0]:
            best = (rounds, ids)
    return best


def write_results(results, path) -> None:
    cols = ["family", "delta", "D", "algorithm", "forced_rounds", "bound"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=cols)
        wr.writeheader()
        for r in results:
            wr.writerow(r.row())


def fan_granularity(fam: FanFamily) -> float:
    return granularity(fam.member([0] * fam.layers))


__all__ = [
    "ChainGadget", "FanFamily", "AdversaryResult", "AllTransmit", "TakeTurns",
    "build_chain_family", "build_fan_family", "adversary_run", "id_search",
    "check_chain_blocking", "check_fan_blocking", "check_fan_reachability",
    "export_family", "write_results", "gadget_geometry", "block_size", "fan_granularity",
]
