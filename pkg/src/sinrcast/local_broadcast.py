"""Broadcasting with local knowledge: GranUBr (known granularity) and DiamUBr.

Both run the same phase skeleton.  A station is asleep, active or idle; the
source's box starts active.  In each phase, for every direction in DIR, the
active boxes pick one station with a neighbor in that direction, the picked
stations transmit in diluted slots, and in the next round the smallest-id
hearer of the target box repeats the message to its own box.  At the phase
end active boxes go idle and boxes activated during the phase become active.
"""

from __future__ import annotations

import itertools
import math

from .echo import EchoRun, echo_budget
from .election import ActionProgram, GranElection, election_length
from .engine import Message, Protocol, make_views
from .errors import InvalidArgument
from .geometry import DIR, box_of
from .nogran import color_count, color_index, nogran, scale
from .schedules import flat_constant

ASLEEP, ACTIVE, IDLE = "asleep", "active", "idle"


def next_pow2(g: float) -> int:
    h = 1
    while h < g:
        h *= 2
    return h


class PhaseProgram(ActionProgram):
    """Shared state machine of one station; subclasses fill in how a direction leader is picked."""

    def __init__(self, view, proto):
        super().__init__(view)
        self.proto = proto
        p = view.params
        self.gamma = p.pivotal
        self.r = p.range
        self.d = proto.dilution(view)
        self.box = tuple(box_of(view.position, self.gamma)[:2])
        self.sigma = (self.box[0] % self.d) * self.d + (self.box[1] % self.d)
        nb = view.neighbors or {}
        self.mates = {view.id: view.position}
        self.mates.update({u: q for u, q in nb.items() if tuple(box_of(q, self.gamma)[:2]) == self.box})
        nboxes = {tuple(box_of(q, self.gamma)[:2]) for q in nb.values()}
        self.connected = [(self.box[0] + a, self.box[1] + b) in nboxes for a, b in DIR]
        self.active_phase = None
        self.elections: dict = {}
        self.leaders: dict = {}
        self.length = proto.phase_length(view)
        self.slot_length = self.length // len(DIR)

    # timing
    def phase_of(self, t: int) -> int:
        return (t - 1) // self.length if t >= 1 else -1

    def phase_start(self, k: int) -> int:
        return 1 + k * self.length

    def state(self, t: int) -> str:
        k = self.phase_of(t)
        if self.active_phase is None or k < self.active_phase:
            return ASLEEP
        return ACTIVE if k == self.active_phase else IDLE

    # engine hooks
    def start(self, informed: bool) -> None:
        self.informed = informed
        if informed:
            self.at(0, lambda t: Message("src", self.id, self.view.position, True, None))
            self._activate(0)

    def _activate(self, k: int) -> None:
        if self.active_phase is None:
            self.active_phase = k
            self.at(self.phase_start(k), self._begin_phase)

    def _begin_phase(self, t: int):
        k = self.phase_of(t)
        for q in range(len(DIR)):
            self.setup_direction(k, q, t + q * self.slot_length)

    def setup_direction(self, k: int, q: int, base: int):
        raise NotImplementedError

    def _schedule_election(self, k, q, start, h):
        el = GranElection(self.id, self.view.position, h, self.d, start, self.gamma, tag=(k, q))
        self.elections[(k, q)] = el
        for tr in el.rounds():
            self.at(tr, el.on_round)
        self.at(el.end + 2 * self.sigma, lambda t, el=el, k=k, q=q: self._round1(t, el, k, q))

    def _round1(self, t, el, k, q):
        lead, lid = el.outcome(t)
        if el.collision is not None:
            self.flags.append(f"station {self.id}: duplicate sub-box leaders in phase {k} direction {DIR[q]}")
        if not lead:
            return None
        self.leaders[(k, q)] = True
        return Message("r1", self.id, self.view.position, True, (k, q, ACTIVE))

    def on_receive(self, t: int, msg: Message) -> None:
        if msg.data:
            self.informed = True
        kind = msg.kind
        if kind == "elect":
            el = self.elections.get(msg.body[0])
            if el is not None:
                el.on_receive(t, msg)
            return
        if kind == "echo":
            self.on_echo(t, msg)
            return
        sender_box = tuple(box_of(msg.pos, self.gamma)[:2])
        same_box = sender_box == self.box
        k = self.phase_of(t)
        asleep = self.state(t) == ASLEEP
        if kind == "src":
            if same_box:
                self._activate(0)
            return
        if kind == "r1":
            _, q, sender_state = msg.body
            if asleep and sender_state == ACTIVE:
                self._activate(k + 1)
            d1, d2 = DIR[q]
            if asleep and self.box == (sender_box[0] + d1, sender_box[1] + d2) and self._dominates(msg.pos):
                self.at(t + 1, lambda tt: Message("r2", self.id, self.view.position, True, (k, q, ASLEEP)))
            return
        if kind == "r2":
            if asleep and same_box:
                self._activate(k + 1)

    def on_echo(self, t, msg):
        pass

    def _dominates(self, vpos) -> bool:
        close = [w for w, p in self.mates.items() if math.hypot(p[0] - vpos[0], p[1] - vpos[1]) <= self.r]
        return bool(close) and min(close) == self.id

    def snapshot(self, t: int) -> dict:
        return {"state": self.state(t), "informed": self.informed}


class GranProgram(PhaseProgram):
    def setup_direction(self, k, q, base):
        if self.connected[q]:
            self._schedule_election(k, q, base, self.proto.h)


class GranUBr(Protocol):
    """Broadcast for networks where every station knows its neighbors and a granularity bound g."""

    name = "gran-ubr"
    local_knowledge = True

    def __init__(self, g: float, n: int | None = None):
        if g < 1:
            raise InvalidArgument("granularity bound must be >= 1")
        self.g = g
        self.h = next_pow2(g)
        self.n = n
        self._length = None

    def dilution(self, view) -> int:
        p = view.params
        return flat_constant(p.alpha, p.epsilon, self.n or view.n, p.beta)

    def phase_length(self, view) -> int:
        d = self.dilution(view)
        return len(DIR) * (election_length(self.h, d) + 2 * d * d)

    def program(self, view):
        return GranProgram(view, self)

    def boundaries(self):
        return None if self._length is None else (1 + k * self._length for k in itertools.count())

    def prepare(self, network) -> None:
        self._length = self.phase_length(make_views(network, True)[network.source])

    def get_params(self) -> dict:
        return {"g": self.g, "h": self.h, "n": self.n}


class DiamProgram(PhaseProgram):
    def __init__(self, view, proto):
        super().__init__(view, proto)
        self.nhat = proto.n_bound or view.n
        self.c = proto.scale(view)
        self.echo_len = echo_budget(self.nhat)
        self._coloring = None
        self.echos: dict = {}

    @property
    def coloring(self):
        if self._coloring is None:
            p = self.view.params
            self._coloring = nogran(self.mates.items(), self.c, self.gamma, p.alpha, self.nhat)
        return self._coloring

    def setup_direction(self, k, q, base):
        sq = self.coloring.of(self.id)
        ci = color_index(sq.color, self.nhat)
        start = base + ci * self.echo_len
        key = (k, q, self.box, sq.ix, sq.iy)
        members = {s: self.mates[s] for s in sq.members}
        run = EchoRun(self.id, members, self.connected[q], start, key)
        self.echos[key] = run
        for off in run.speaking_offsets():
            self.at(start + off, run.on_round)
        el_start = base + color_count(self.nhat) * self.echo_len
        self.at(el_start, lambda t, run=run, k=k, q=q: self._after_echo(t, run, k, q))

    def _after_echo(self, t, run, k, q):
        rep = run.outcome(t)
        if rep == "pending":
            self.flags.append(f"station {self.id}: echo search unfinished in phase {k} direction {DIR[q]}")
            return None
        self.reps = getattr(self, "reps", {})
        self.reps[(k, q)] = rep
        if rep == self.id:
            self._schedule_election(k, q, t, self.c)
        return None

    def on_echo(self, t, msg):
        run = self.echos.get(msg.body[0])
        if run is not None:
            run.on_receive(t, msg)

    def snapshot(self, t: int) -> dict:
        out = super().snapshot(t)
        if self.state(t) == ACTIVE:
            sq = self.coloring.of(self.id)
            out["square"] = [sq.ix, sq.iy, sq.side]
            out["color"] = list(sq.color)
        return out


class DiamUBr(Protocol):
    """Broadcast with local knowledge and no granularity bound."""

    name = "diam-ubr"
    local_knowledge = True

    def __init__(self, n_bound: int | None = None):
        self.n_bound = n_bound
        self._length = None

    def dilution(self, view) -> int:
        p = view.params
        return flat_constant(p.alpha, p.epsilon, self.n_bound or view.n, p.beta)

    def scale(self, view) -> int:
        return scale(view.params.alpha, self.n_bound or view.n)

    def phase_length(self, view) -> int:
        d = self.dilution(view)
        nhat = self.n_bound or view.n
        echo = color_count(nhat) * echo_budget(nhat)
        return len(DIR) * (echo + election_length(self.scale(view), d) + 2 * d * d)

    def program(self, view):
        if self.n_bound is not None and view.n > self.n_bound:
            raise InvalidArgument("network larger than the size bound")
        return DiamProgram(view, self)

    def prepare(self, network) -> None:
        if self.n_bound is not None and network.n > self.n_bound:
            raise InvalidArgument("network larger than the size bound")
        self._length = self.phase_length(make_views(network, True)[network.source])

    def boundaries(self):
        return None if self._length is None else (1 + k * self._length for k in itertools.count())

    def get_params(self) -> dict:
        return {"n_bound": self.n_bound}
