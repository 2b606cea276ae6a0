"""Per-box leader election by quadtree merging, plus the agenda-driven program base."""

from __future__ import annotations

import heapq
import math
from fractions import Fraction

from .engine import Message, StationProgram


class AgendaProgram(StationProgram):
    """Program whose next wake-up is the earliest entry of a private agenda."""

    def __init__(self, view):
        super().__init__(view)
        self._agenda: list = []
        self.flags: list = []

    @property
    def wake(self):
        return self._agenda[0] if self._agenda else None

    @wake.setter
    def wake(self, value):
        # the base constructor assigns None; agendas are managed through plan()
        if value is not None:
            self.plan(value)

    def plan(self, t: int) -> None:
        heapq.heappush(self._agenda, t)

    def due(self, t: int) -> None:
        while self._agenda and self._agenda[0] <= t:
            heapq.heappop(self._agenda)


class ActionProgram(AgendaProgram):
    """Agenda program that runs callbacks registered for specific rounds.

    A callback returns a Message or None; at most one message per round.
    Callbacks registered for the round being processed run in the same round.
    """

    def __init__(self, view):
        super().__init__(view)
        self.actions: dict = {}
        self._now = None

    def at(self, t: int, fn) -> None:
        if self._now is not None and t < self._now:
            raise RuntimeError(f"station {self.id}: action for past round {t}")
        self.actions.setdefault(t, []).append(fn)
        if t != self._now:
            self.plan(t)

    def on_round(self, t: int):
        self.due(t)
        self._now = t
        out = None
        try:
            while self.actions.get(t):
                for fn in self.actions.pop(t):
                    msg = fn(t)
                    if msg is None:
                        continue
                    if out is not None:
                        raise RuntimeError(f"station {self.id} scheduled two transmissions in round {t}")
                    out = msg
        finally:
            self._now = None
        return out


def level0_box(position, h: int, gamma: float) -> tuple[int, int]:
    """Index of the box of side gamma/h containing `position` (exact)."""
    g = Fraction(gamma)
    return (math.floor(Fraction(position[0]) * h / g), math.floor(Fraction(position[1]) * h / g))


def election_length(h: int, d: int) -> int:
    return 4 * d * d * int(round(math.log2(h)))


class GranElection:
    """One station's part in electing a leader per pivotal box.

    Every participant starts as leader of its box of side gamma/h.  At level l
    the leaders of the four sub-boxes of each box of the next level take turns
    by label, each turn d-diluted over the level-l grid; the smallest label
    heard (or owned) wins the bigger box.  After log2(h) levels one leader per
    pivotal box remains and every participant of the box knows it.
    """

    def __init__(self, sid: int, position, h: int, d: int, start: int, gamma: float, tag=None):
        if h < 1 or h & (h - 1):
            raise ValueError("h must be a power of two")
        self.sid = sid
        self.position = position
        self.h = h
        self.d = d
        self.start = start
        self.gamma = gamma
        self.tag = tag
        self.levels = int(round(math.log2(h)))
        self.length = election_length(h, d)
        self.end = start + self.length
        self.b0 = level0_box(position, h, gamma)
        self.leader = True
        self.resolved = 0
        self.heard: dict = {}
        self.leader_id = sid if self.levels == 0 else None
        self.collision = None

    def box(self, level: int) -> tuple[int, int]:
        return (self.b0[0] >> level, self.b0[1] >> level)

    def label(self, level: int) -> int:
        bx, by = self.box(level)
        return (bx & 1) + 2 * (by & 1) + 1

    def slot(self, level: int) -> int:
        bx, by = self.box(level)
        return (bx % self.d) * self.d + (by % self.d)

    def transmit_round(self, level: int) -> int:
        dd = self.d * self.d
        return self.start + level * 4 * dd + (self.label(level) - 1) * dd + self.slot(level)

    def rounds(self) -> list[int]:
        """Rounds at which this station might transmit (it checks leadership when they come)."""
        return [self.transmit_round(l) for l in range(self.levels)]

    def _resolve(self, t: int) -> None:
        span = 4 * self.d * self.d
        while self.resolved < self.levels and self.start + (self.resolved + 1) * span <= t:
            l = self.resolved
            heard = self.heard.get(l, {})
            labels = dict(heard)
            if self.leader:
                labels[self.label(l)] = self.sid
            if labels:
                winner = labels[min(labels)]
                self.leader = self.leader and winner == self.sid
                if l == self.levels - 1:
                    self.leader_id = winner
            else:
                self.leader = False
            self.resolved += 1

    def on_round(self, t: int):
        self._resolve(t)
        if self.resolved >= self.levels or not self.leader:
            return None
        l = self.resolved
        if t != self.transmit_round(l):
            return None
        return Message("elect", self.sid, self.position, False, (self.tag, l, self.label(l)))

    def on_receive(self, t: int, msg: Message) -> None:
        if msg.kind != "elect" or not (self.start <= t < self.end):
            return
        tag, l, label = msg.body
        if tag != self.tag:
            return
        self._resolve(t)
        if l != self.resolved:
            return
        other = level0_box(msg.pos, self.h, self.gamma)
        if (other[0] >> (l + 1), other[1] >> (l + 1)) != (self.b0[0] >> (l + 1), self.b0[1] >> (l + 1)):
            return
        seen = self.heard.setdefault(l, {})
        mine = self.leader and label == self.label(l)
        if mine or (label in seen and seen[label] != msg.sender):
            # two claimed leaders for one sub-box: the granularity bound was wrong
            self.collision = (l, label)
        seen[label] = msg.sender

    def outcome(self, t: int):
        """(is_leader, leader_id) once the election is over."""
        self._resolve(max(t, self.end))
        return self.leader, self.leader_id
