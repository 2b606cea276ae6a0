"""Broadcast without neighborhood knowledge: SizeUBr, LeaderElection and GeneralBroadcast.

Stations know their own id and position, n (or a bound on it) and N.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

from .election import ActionProgram, GranElection, election_length
from .engine import Message, Protocol, StationProgram
from .errors import InvalidArgument, UnsupportedParameter
from .geometry import DIR, box_of
from .schedules import flat_constant, selector_constant, selector_family


@lru_cache(maxsize=32)
def selector_slots(alpha: float, epsilon: float, beta: float, noise: float, N: int):
    """(length, {id: slot indices}) of the selector used by the ad-hoc algorithms."""
    fam = selector_family(N, selector_constant(alpha, epsilon, beta, noise))
    return fam.size, fam.membership()


def _require_alpha(params) -> None:
    if params.alpha <= 2:
        raise UnsupportedParameter("ad-hoc broadcasting needs alpha > 2")


def _log2ceil(n: int) -> int:
    return max(0, math.ceil(math.log2(max(1, n))))


# ---------------------------------------------------------------- SizeUBr

class SizeProgram(StationProgram):
    """Group merging (odd rounds) interleaved with round robin inside groups (even rounds)."""

    def __init__(self, view, proto):
        super().__init__(view)
        p = view.params
        self.s = proto.s
        self.slots = proto.slots.get(view.id, ())
        self.d = proto.d
        self.dd = self.d * self.d
        self.block = 4 * self.s
        self.box = view.box()
        self.sigma = (self.box[0] % self.d) * self.d + (self.box[1] % self.d)
        self.end = proto.budget
        self.gamma = p.pivotal
        self.L = True
        self.M = view.id
        self.G = frozenset([view.id])
        self.X: set = set()
        self.Xu: dict = {}
        self.Gu: dict = {}
        self.match = None
        self.informed_round = None
        self.done_block = -1  # last block whose end-of-block step ran
        self.joins: list = []

    # round arithmetic
    def first_block(self) -> int:
        return max(0, (self.informed_round - 1) // self.block + 1)

    def block_start(self, b: int) -> int:
        return 1 + b * self.block

    def block_of(self, t: int) -> int:
        return (t - 1) // self.block

    def participates(self, b: int) -> bool:
        return self.informed_round is not None and b >= self.first_block()

    def tid(self) -> int:
        return sum(1 for u in self.G if u < self.id)

    # lazy end-of-block step
    def settle(self, t: int) -> None:
        if self.informed_round is None:
            return
        last = self.block_of(t) - 1  # blocks strictly before round t are over
        b = max(self.done_block + 1, self.first_block())
        while b <= last:
            self.modify(b)
            b += 1
        self.done_block = max(self.done_block, last)

    def modify(self, b: int) -> None:
        self.match = None
        if self.L and self.X:
            u = min(self.X)
            xu = self.Xu.get(u)
            if xu is not None and xu and self.id == min(xu):
                self.match = u
                if self.id > u:
                    self.M = u
                    self.L = False
                self.G = self.G | self.Gu[u]
                self.joins.append((b, u))
        self.X, self.Xu, self.Gu = set(), {}, {}

    def start(self, informed: bool) -> None:
        self.informed = informed
        if informed:
            self.informed_round = -1
            self.wake = 0

    def _msg(self, kind, body=None):
        return Message(kind, self.id, self.view.position, True, body)

    def on_round(self, t: int):
        self.settle(t)
        out = None
        if t == 0:
            out = self._msg("src")
        elif t <= self.end and self.participates(self.block_of(t)):
            if t % 2 == 1:
                tau = (t - 1) // 2 % (2 * self.s)
                if self.L and tau < self.s and tau in self.slots:
                    out = self._msg("g", self.G)
                elif self.L and tau >= self.s and tau - self.s in self.slots:
                    out = self._msg("x", frozenset(self.X))
            else:
                tau2 = t // 2 - 1
                if tau2 % self.dd == self.sigma and (tau2 // self.dd) % len(self.G) == self.tid():
                    out = self._msg("rr")
        self._rewake(t)
        return out

    def on_receive(self, t: int, msg: Message) -> None:
        self.settle(t)
        if msg.data and self.informed_round is None:
            self.informed = True
            self.informed_round = t
        if msg.kind in ("g", "x") and self.participates(self.block_of(t)):
            same_box = tuple(box_of(msg.pos, self.gamma)[:2]) == self.box
            if msg.kind == "g":
                if self.L:
                    if same_box:
                        self.X.add(msg.sender)
                        self.Gu[msg.sender] = msg.body
                elif self.G <= msg.body:
                    self.M = msg.sender
                    self.G = msg.body
            elif self.L:
                self.Xu[msg.sender] = msg.body
        self._rewake(t)

    def _rewake(self, t: int) -> None:
        if self.informed_round is None:
            self.wake = None
            return
        b = max(self.block_of(t + 1) if t >= 0 else 0, self.first_block())
        cands = [self.block_start(b + 1)]
        lo = max(t + 1, self.block_start(b))
        if self.L:
            base = self.block_start(b)
            for idx in self.slots:
                for off in (idx, self.s + idx):
                    r = base + 2 * off
                    if r >= lo:
                        cands.append(r)
                        break
        # next round-robin slot at or after lo
        tau2 = max((lo + 1) // 2 - 1, 0)
        while 2 * tau2 + 2 < lo:
            tau2 += 1
        chunk = tau2 // self.dd
        if chunk * self.dd + self.sigma < tau2:
            chunk += 1
        g = len(self.G)
        chunk += (self.tid() - chunk) % g
        cands.append(2 * (chunk * self.dd + self.sigma) + 2)
        w = min(cands)
        self.wake = w if w <= self.end else None

    def snapshot(self, t: int) -> dict:
        self.settle(t)
        part = self.informed_round is not None and self.informed_round < t
        return {"informed": self.informed_round is not None, "participating": part,
                "L": self.L, "M": self.M, "G": sorted(self.G), "match": self.match}


class SizeUBr(Protocol):
    """Broadcast in O(n log N) rounds knowing only n and N."""

    name = "size-ubr"

    def __init__(self, n: int | None = None, N: int | None = None, budget_blocks: int | None = None):
        self.n = n
        self.N = N
        self.budget_blocks = budget_blocks
        self.s = None

    def prepare(self, network) -> None:
        p = network.params
        _require_alpha(p)
        N = self.N or network.id_bound
        n = self.n or network.n
        if N < network.id_bound or n < network.n:
            raise InvalidArgument("n or N below the network's actual values")
        self.s, self.slots = selector_slots(p.alpha, p.epsilon, p.beta, p.noise, N)
        self.d = flat_constant(p.alpha, p.epsilon, n, p.beta)
        # progress grows by one per block and never exceeds 23n
        blocks = self.budget_blocks or 23 * n + 1
        self.budget = blocks * 4 * self.s
        self._N, self._n = N, n

    def program(self, view):
        if self.s is None:
            raise InvalidArgument("SizeUBr.prepare(network) must run first")
        return SizeProgram(view, self)

    def boundaries(self):
        if self.s is None:
            return None
        return (1 + 4 * self.s * b for b in itertools.count())

    def get_params(self) -> dict:
        return {"n": self.n, "N": self.N, "budget_blocks": self.budget_blocks}


# ---------------------------------------------------------------- LeaderElection

class LeaderElectionRun:
    """One station's part in one leader election execution starting at `start`.

    Elimination: in phases 1..L+1, for each of the 9 classes of boxes (mod 3),
    class candidates run the selector twice (ids, then heard sets); a candidate
    survives only as the smaller end of a mutual minimum pair.  Selection:
    from the highest elimination phase down, the stations of that phase
    elect a per-box leader by quadtree merging, the leader announces with
    constant dilution and its box goes silent.
    """

    def __init__(self, host, start: int, nhat: int, s: int, slots, d: int, tag):
        self.host = host
        self.sid = host.id
        self.pos = host.view.position
        self.gamma = host.view.params.pivotal
        self.box = tuple(box_of(self.pos, self.gamma)[:2])
        self.cls = (self.box[0] % 3) * 3 + (self.box[1] % 3)
        self.start = start
        self.phases = _log2ceil(nhat) + 1
        self.s = s
        self.slots = slots
        self.d = d
        self.sigma = (self.box[0] % d) * d + (self.box[1] % d)
        self.h = 2 ** _log2ceil(nhat)
        self.tag = tag
        self.elim_len = self.phases * 9 * 2 * s
        self.stage = election_length(self.h, d) + d * d
        self.length = self.elim_len + self.phases * self.stage
        self.end = start + self.length
        self.cand = True
        self.ph = None
        self.state = "active"
        self.X: set = set()
        self.Xu: dict = {}
        self.resolved = 0
        self.election = None
        self.leader_round = None

    def class_base(self, i: int) -> int:
        return self.start + ((i - 1) * 9 + self.cls) * 2 * self.s

    def stage_base(self, i: int) -> int:
        return self.start + self.elim_len + (self.phases - i) * self.stage

    def begin(self) -> None:
        at = self.host.at
        for i in range(1, self.phases + 1):
            base = self.class_base(i)
            for idx in self.slots:
                at(base + idx, self._first)
                at(base + self.s + idx, self._second)
        for i in range(self.phases, 0, -1):
            at(self.stage_base(i), lambda t, i=i: self._select(t, i))

    def settle(self, t: int) -> None:
        while self.resolved < self.phases and self.class_base(self.resolved + 1) + 2 * self.s <= t:
            i = self.resolved + 1
            if self.cand:
                keep = False
                if self.X:
                    u = min(self.X)
                    xu = self.Xu.get(u)
                    keep = xu is not None and self.sid <= min(xu | {u})
                if not keep:
                    self.cand = False
                    self.ph = i
            self.X, self.Xu = set(), {}
            self.resolved += 1
        if self.resolved == self.phases and self.cand:
            # halving guarantees this never happens; keep the station in the top class
            self.cand = False
            self.ph = self.phases
            self.host.flags.append(f"station {self.sid}: survived every elimination phase")

    def _first(self, t):
        self.settle(t)
        if self.cand:
            return Message("le1", self.sid, self.pos, False, (self.tag,))
        return None

    def _second(self, t):
        self.settle(t)
        if self.cand:
            return Message("le2", self.sid, self.pos, False, (self.tag, frozenset(self.X)))
        return None

    def _select(self, t, i):
        self.settle(t)
        if self.state != "active" or self.ph != i:
            return None
        el = GranElection(self.sid, self.pos, self.h, self.d, t, self.gamma, tag=(self.tag, i))
        self.election = el
        for r in el.rounds():
            self.host.at(r, el.on_round)
        self.host.at(el.end + self.sigma, lambda tt, el=el: self._announce(tt, el))
        return None

    def _announce(self, t, el):
        lead, _ = el.outcome(t)
        if el.collision is not None:
            self.host.flags.append(f"station {self.sid}: duplicate sub-box leaders in selection")
        if not lead or self.state != "active":
            return None
        self.state = "leader"
        self.leader_round = t
        return Message("ann", self.sid, self.pos, True, (self.tag,))

    def in_window(self, t: int) -> bool:
        return self.start <= t < self.end

    def on_receive(self, t: int, msg: Message) -> None:
        if not self.in_window(t) or not msg.body or msg.body[0] != self.tag:
            if msg.kind == "elect" and self.election is not None:
                self.election.on_receive(t, msg)
            return
        self.settle(t)
        same_box = tuple(box_of(msg.pos, self.gamma)[:2]) == self.box
        if msg.kind == "le1":
            if self.cand and same_box:
                self.X.add(msg.sender)
        elif msg.kind == "le2":
            if self.cand:
                self.Xu[msg.sender] = msg.body[1]
        elif msg.kind == "ann":
            if same_box and self.state == "active":
                self.state = "passive"

    def summary(self, t: int) -> dict:
        self.settle(t)
        return {"ph": self.ph, "state": self.state, "start": self.start}


def le_length(nhat: int, s: int, d: int) -> int:
    phases = _log2ceil(nhat) + 1
    h = 2 ** _log2ceil(nhat)
    return phases * 9 * 2 * s + phases * (election_length(h, d) + d * d)


class ElectionHost(ActionProgram):
    """Program running leader elections back to back from round 1."""

    def __init__(self, view, proto):
        super().__init__(view)
        self.proto = proto
        self.informed_round = None
        self.runs: list = []
        self.state = "waiting"

    def exec_start(self, e: int) -> int:
        return 1 + e * self.proto.le_len

    def next_exec(self, after: int) -> int:
        return max(0, (after - 1) // self.proto.le_len + 1)

    def start(self, informed: bool) -> None:
        self.informed = informed
        if informed:
            self.informed_round = -1
            self.at(0, lambda t: Message("src", self.id, self.view.position, True, None))
            self._join(0)

    def _join(self, e: int) -> None:
        if self.proto.max_execs is not None and e >= self.proto.max_execs:
            return
        self.at(self.exec_start(e), lambda t, e=e: self._run(t, e))

    def _run(self, t, e):
        p = self.proto
        run = LeaderElectionRun(self, t, p.nhat, p.s, p.slots.get(self.id, ()), p.d, e)
        self.runs.append(run)
        run.begin()
        self.at(run.end, lambda tt, run=run, e=e: self._after(tt, run, e))
        return None

    def _after(self, t, run, e):
        run.settle(t)
        if run.state == "leader":
            self.state = "leader"
        elif self.proto.repeat:
            self._join(e + 1)
        return None

    def on_receive(self, t: int, msg: Message) -> None:
        if msg.data and self.informed_round is None:
            self.informed = True
            self.informed_round = t
            e = self.next_exec(t)
            if self.proto.repeat or e == 0:
                self._join(e)
        if self.runs:
            self.runs[-1].on_receive(t, msg)

    def snapshot(self, t: int) -> dict:
        out = {"informed": self.informed, "state": self.state}
        done = [r for r in self.runs if r.end <= t]
        if done:
            out["last"] = done[-1].summary(t)
        return out


class _ElectionProtocol(Protocol):
    repeat = True
    max_execs = None

    def __init__(self, nhat: int | None = None, N: int | None = None):
        self.nhat_arg = nhat
        self.N = N
        self.s = None

    def prepare(self, network) -> None:
        p = network.params
        _require_alpha(p)
        N = self.N or network.id_bound
        if N < network.id_bound:
            raise InvalidArgument("N below the largest id")
        self.nhat = self.nhat_arg or self.default_nhat(network, N)
        if self.nhat < 1:
            raise InvalidArgument("size bound must be positive")
        self.s, self.slots = selector_slots(p.alpha, p.epsilon, p.beta, p.noise, N)
        self.d = flat_constant(p.alpha, p.epsilon, self.nhat, p.beta)
        self.le_len = le_length(self.nhat, self.s, self.d)

    def default_nhat(self, network, N):
        return N

    def resolved(self) -> dict:
        if self.s is None:
            return {}
        return {"resolved": {"nhat": self.nhat, "s": self.s, "d": self.d, "le_len": self.le_len}}

    def program(self, view):
        if self.s is None:
            raise InvalidArgument("prepare(network) must run first")
        return ElectionHost(view, self)

    def boundaries(self):
        if self.s is None:
            return None
        return (1 + e * self.le_len for e in itertools.count())


class LeaderElection(_ElectionProtocol):
    """A single leader election among the source and the stations it informs in round 0."""

    name = "leader-election"
    repeat = False

    def default_nhat(self, network, N):
        return network.n

    def get_params(self) -> dict:
        return {"nhat": self.nhat_arg, "N": self.N, **self.resolved()}


class GeneralBroadcast(_ElectionProtocol):
    """Repeated leader elections; every elected leader announces the message once.

    Without `rounds` each informed station takes part until it is elected (size
    bound N).  With `rounds` (D times Delta) the loop stops after that many
    elections and the size bound defaults to n.
    """

    name = "general"

    def __init__(self, N: int | None = None, nhat: int | None = None, rounds: int | None = None):
        super().__init__(nhat, N)
        self.rounds = rounds
        self.max_execs = rounds

    def default_nhat(self, network, N):
        return network.n if self.rounds is not None else N

    def get_params(self) -> dict:
        return {"N": self.N, "nhat": self.nhat_arg, "rounds": self.rounds, **self.resolved()}
