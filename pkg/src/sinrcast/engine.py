"""SINR reception and the round-synchronous execution engine.

Programs are event driven: each one exposes ``wake``, the next round at which
it wants ``on_round`` to be called.  Receptions are pushed through
``on_receive`` as soon as a round is resolved.  Rounds in which no program is
due are skipped, which is equivalent to running them with nobody transmitting.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

import numpy as np

from .errors import ContractViolation, InvalidArgument, ModelViolation
from .geometry import Network, box_of

MARGIN = 1e-9


def sinr_value(sender: int, receiver: int, transmitters, network: Network) -> float:
    if sender not in transmitters:
        raise InvalidArgument("sender must be transmitting")
    if receiver == sender:
        raise InvalidArgument("receiver must differ from sender")
    p = network.params
    signal = None
    interference = p.noise
    for w in transmitters:
        d = network.dist(w, receiver)
        if d == 0:
            raise ModelViolation(f"receiver {receiver} coincides with transmitter {w}")
        power = p.power * d ** (-p.alpha)
        if w == sender:
            signal = power
        else:
            interference += power
    return signal / interference


def receives(sender: int, receiver: int, transmitters, network: Network) -> bool:
    if receiver in transmitters:
        return False
    p = network.params
    d = network.dist(sender, receiver)
    if d == 0:
        raise ModelViolation(f"receiver {receiver} coincides with transmitter {sender}")
    if p.power * d ** (-p.alpha) < p.sensitivity:
        return False
    return sinr_value(sender, receiver, transmitters, network) >= p.beta


class Channel:
    """Vectorised evaluation of the reception rule for one network."""

    def __init__(self, network: Network):
        self.network = network
        p = network.params
        d = np.array(network.distances)
        np.fill_diagonal(d, np.inf)
        with np.errstate(divide="ignore"):
            self.gain = p.power * d ** (-p.alpha)
        self.noise = p.noise
        self.beta = p.beta
        self.floor = p.sensitivity

    def resolve(self, senders: list[int]) -> list[tuple[int, int]]:
        """Return (receiver_index, sender_index) pairs for one round."""
        if not senders:
            return []
        if len(set(senders)) != len(senders):
            raise InvalidArgument("duplicate senders in one round")
        t = np.asarray(senders)
        g = self.gain[t]
        cols = np.arange(g.shape[1])
        best = np.argmax(g, axis=0)
        signal = g[best, cols]
        rest = g.copy()
        rest[best, cols] = 0.0
        interference = self.noise + rest.sum(axis=0)
        sinr = signal / interference
        listening = np.ones(g.shape[1], dtype=bool)
        listening[t] = False
        close = listening & (
            (np.abs(sinr - self.beta) <= MARGIN * self.beta)
            | (np.abs(signal - self.floor) <= MARGIN * self.floor)
        )
        if close.any():
            k = int(np.nonzero(close)[0][0])
            raise ModelViolation(
                f"reception at station {self.network.ids[k]} is within numerical margin of the threshold"
            )
        ok = listening & (sinr >= self.beta) & (signal >= self.floor)
        idx = np.nonzero(ok)[0]
        return [(int(k), int(t[best[k]])) for k in idx]


def simulate_round(network: Network, transmissions, channel: Optional[Channel] = None):
    """Deliveries for one round given {sender_id: payload} (or an id iterable)."""
    if isinstance(transmissions, dict):
        payloads = transmissions
        senders = list(transmissions)
    else:
        senders = list(transmissions)
        payloads = {s: None for s in senders}
    if len(set(senders)) != len(senders):
        raise InvalidArgument("duplicate senders in one round")
    channel = channel or Channel(network)
    idx = [network.index[s] for s in senders]
    ids = network.ids
    return [Delivery(ids[r], ids[s], payloads[ids[s]]) for r, s in channel.resolve(idx)]


@dataclass(frozen=True)
class Delivery:
    receiver: int
    sender: int
    payload: Any = None
    round: int = -1


class Message:
    """Payload of one transmission; ``data`` marks that it carries the broadcast message."""

    __slots__ = ("kind", "sender", "pos", "data", "body")

    def __init__(self, kind: str, sender: int, pos, data: bool = False, body=None):
        self.kind = kind
        self.sender = sender
        self.pos = pos
        self.data = data
        self.body = body

    def __repr__(self):
        return f"Message({self.kind!r}, {self.sender}, data={self.data}, body={self.body!r})"


@dataclass(frozen=True)
class StationView:
    """What one station knows when it wakes up."""

    id: int
    position: tuple[float, float]
    params: Any
    n: int
    id_bound: int
    neighbors: Optional[dict] = None
    extra: dict = field(default_factory=dict)

    def box(self, cell: Optional[float] = None) -> tuple[int, int]:
        return tuple(box_of(self.position, cell or self.params.pivotal)[:2])


class StationProgram:
    """Base class for per-station behaviour."""

    def __init__(self, view: StationView):
        self.view = view
        self.id = view.id
        self.wake: Optional[int] = None
        self.informed = False

    def start(self, informed: bool) -> None:
        self.informed = informed
        if informed:
            self.wake = 0

    def on_round(self, t: int) -> Optional[Message]:
        return None

    def on_receive(self, t: int, msg: Message) -> None:
        if msg.data:
            self.informed = True

    def snapshot(self, t: int) -> dict:
        return {"informed": self.informed}

    @property
    def terminal(self) -> bool:
        return self.wake is None


class Protocol:
    """Factory of station programs plus the schedule facts the harness needs."""

    name = "protocol"
    local_knowledge = False

    def program(self, view: StationView) -> StationProgram:
        raise NotImplementedError

    def prepare(self, network: Network) -> None:
        """Fix network-dependent constants before programs are built."""

    def boundaries(self) -> Optional[Iterable[int]]:
        return None

    def get_params(self) -> dict:
        return {k: v for k, v in vars(self).items() if not k.startswith("_")}


@dataclass
class Trace:
    n: int
    source: int
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    informed_at: dict = field(default_factory=dict)
    last_round: int = 0
    exhausted: bool = False
    flags: list = field(default_factory=list)
    payloads: Optional[dict] = None
    meta: dict = field(default_factory=dict)

    @property
    def informed(self) -> set:
        return set(self.informed_at)

    @property
    def complete(self) -> bool:
        return len(self.informed_at) == self.n

    @property
    def rounds(self) -> Optional[int]:
        """Rounds needed until every station was informed (None if never)."""
        if not self.complete:
            return None
        if self.n == 1:
            return 0
        return max(self.informed_at.values()) + 1

    def jsonl_lines(self, snapshots: bool = False) -> Iterable[str]:
        if self.meta:
            yield json.dumps({"meta": self.meta}, separators=(",", ":"), sort_keys=True)
        for rnd, senders, deliveries in self.records:
            yield json.dumps({"round": rnd, "senders": list(senders),
                              "deliveries": [{"to": a, "from": b} for a, b in deliveries]},
                             separators=(",", ":"))
        if snapshots:
            for rnd, states in self.snapshots:
                yield json.dumps({"snapshot": rnd, "states": {str(k): v for k, v in states.items()}},
                                 separators=(",", ":"), sort_keys=True)

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.jsonl_lines(snapshots=True):
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    def write_jsonl(self, path, snapshots: bool = False) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.jsonl_lines(snapshots):
                fh.write(line + "\n")

    @classmethod
    def read_jsonl(cls, path) -> "Trace":
        """Load a trace written by write_jsonl (informed rounds come from the meta line)."""
        meta, records, snaps = {}, [], []
        with open(path, encoding="utf-8") as fh:
            for no, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise InvalidArgument(f"{path}:{no}: not JSON ({exc})") from exc
                if "meta" in obj:
                    meta = obj["meta"]
                elif "snapshot" in obj:
                    snaps.append((obj["snapshot"], {int(k): v for k, v in obj["states"].items()}))
                elif "round" in obj:
                    pairs = tuple(sorted((d["to"], d["from"]) for d in obj["deliveries"]))
                    records.append((obj["round"], tuple(obj["senders"]), pairs))
                else:
                    raise InvalidArgument(f"{path}:{no}: unknown trace line")
        tr = cls(meta.get("n", 0), meta.get("source", 0), records, snaps)
        tr.informed_at = {int(k): v for k, v in meta.get("informed_at", {}).items()}
        tr.last_round = meta.get("last_round", 0)
        tr.exhausted = meta.get("exhausted", False)
        tr.flags = list(meta.get("flags", []))
        tr.meta = meta
        return tr


def make_views(network: Network, local: bool, extra: Optional[dict] = None) -> dict:
    views = {}
    for s in network.stations:
        nb = None
        if local:
            nb = {u: network.station(u).position for u in network.neighbors[s.id]}
        views[s.id] = StationView(s.id, s.position, network.params, network.n,
                                  network.id_bound, nb, dict(extra or {}))
    return views


def run(network: Network, factory, max_rounds: int, snapshots: str = "off",
        stop: str = "quiescent", record: bool = True, extra: Optional[dict] = None) -> Trace:
    """Execute one program per station until quiescence, completion or the budget.

    ``stop="informed"`` ends the run once every station is informed, after
    the next schedule boundary if the protocol declares boundaries.
    """
    if max_rounds <= 0:
        raise InvalidArgument("max_rounds must be positive")
    if snapshots not in ("off", "boundaries", "full"):
        raise InvalidArgument(f"unknown snapshot level {snapshots!r}")
    meta = {}
    if isinstance(factory, Protocol):
        factory.prepare(network)
        meta = {"protocol": factory.name, "params": factory.get_params()}
    make = factory.program if isinstance(factory, Protocol) else factory
    local = bool(getattr(factory, "local_knowledge", False))
    bounds = factory.boundaries() if isinstance(factory, Protocol) else None
    bound_iter = iter(bounds) if bounds is not None else None
    next_bound = next(bound_iter, None) if bound_iter is not None else None

    channel = Channel(network)
    views = make_views(network, local, extra)
    progs = {sid: make(views[sid]) for sid in network.ids}
    trace = Trace(network.n, network.source)
    trace.network = network
    trace.informed_at[network.source] = -1
    for sid, prog in progs.items():
        prog.start(sid == network.source)

    heap: list = []
    due: dict = {}

    def schedule(sid: int, now: int) -> None:
        w = progs[sid].wake
        if w is None:
            due.pop(sid, None)
            return
        if w <= now:
            raise ContractViolation(f"station {sid} asked to wake at round {w} which is not after {now}")
        if due.get(sid) != w:
            due[sid] = w
            heapq.heappush(heap, (w, sid))

    for sid in network.ids:
        schedule(sid, -1)

    ids = network.ids
    index = network.index
    finish_at = None

    def take_snapshot(rnd: int) -> None:
        trace.snapshots.append((rnd, {sid: progs[sid].snapshot(rnd) for sid in ids}))

    while heap:
        t = heap[0][0]
        while next_bound is not None and next_bound <= t:
            if snapshots != "off":
                take_snapshot(next_bound)
            if finish_at is not None:
                break
            next_bound = next(bound_iter, None)
        if finish_at is not None and (next_bound is None or next_bound <= t):
            break
        if t > max_rounds:
            trace.exhausted = not trace.complete
            break
        polled = []
        while heap and heap[0][0] == t:
            w, sid = heapq.heappop(heap)
            if due.get(sid) == w:
                del due[sid]
                polled.append(sid)
        polled.sort()
        tx = {}
        for sid in polled:
            msg = progs[sid].on_round(t)
            if msg is not None:
                if sid not in trace.informed_at:
                    raise ContractViolation(f"station {sid} transmitted in round {t} before being informed")
                tx[sid] = msg
        touched = set(polled)
        pairs = []
        if tx:
            senders = list(tx)
            resolved = channel.resolve([index[s] for s in senders])
            for r, s in resolved:
                to, frm = ids[r], ids[s]
                msg = tx[frm]
                if msg.data and to not in trace.informed_at:
                    trace.informed_at[to] = t
                progs[to].on_receive(t, msg)
                touched.add(to)
                pairs.append((to, frm))
            if record:
                trace.records.append((t, tuple(senders), tuple(sorted(pairs))))
        if snapshots == "full":
            take_snapshot(t)
        for sid in sorted(touched):
            schedule(sid, t)
        trace.last_round = t
        if stop == "informed" and finish_at is None and trace.complete:
            finish_at = t
            if next_bound is None:
                break
    else:
        if next_bound is not None and snapshots != "off":
            take_snapshot(next_bound)
    for prog in progs.values():
        flags = getattr(prog, "flags", None)
        if flags:
            trace.flags.extend(flags)
    trace.programs = progs
    if meta:
        if bounds is not None:
            it = iter(factory.boundaries())
            first, second = next(it, None), next(it, None)
            meta["boundary_start"] = first
            meta["period"] = None if second is None or first is None else second - first
        meta.update(n=network.n, source=network.source, last_round=trace.last_round,
                    exhausted=trace.exhausted, flags=list(trace.flags),
                    informed_at={str(k): v for k, v in sorted(trace.informed_at.items())})
        trace.meta = meta
    return trace
