"""Choosing one representative of a marked subset of a clique by echo binary search."""

from __future__ import annotations

import math

from .engine import Message


def echo_budget(size: int) -> int:
    return 2 + 3 * max(0, math.ceil(math.log2(max(1, size))))


def farthest(psi_pos, members: dict, psi: int):
    """Member farthest from psi, smallest id among ties (None if psi is alone)."""
    best, best_d = None, -1.0
    for sid in sorted(members):
        if sid == psi:
            continue
        p = members[sid]
        dist = math.hypot(p[0] - psi_pos[0], p[1] - psi_pos[1])
        if dist > best_d:
            best, best_d = sid, dist
    return best


class EchoRun:
    """One member's state in a representative choice over the clique `members`.

    psi (smallest id) announces in offset 0, phi (farthest from psi) in offset 1.
    The others are ranked 1..m and searched in triples of rounds: R1 the marked
    members of the lower half, R2 the same plus phi, R3 psi echoes what it heard.
    A lone R1 sender is echoed and chosen; an echoed phi means the half is
    empty; silence means at least two.
    """

    def __init__(self, sid: int, members: dict, marked: bool, start: int, key):
        self.sid = sid
        self.members = dict(members)
        self.marked = marked
        self.start = start
        self.key = key
        self.psi = min(self.members)
        self.phi = farthest(self.members[self.psi], self.members, self.psi)
        rest = sorted(s for s in self.members if s not in (self.psi, self.phi))
        self.tid = {s: k + 1 for k, s in enumerate(rest)}
        self.bot, self.top = 1, len(rest)
        self.nonempty = False
        self.result = None
        self.finished = False
        self.test = 0
        self.heard = {}
        self.budget = echo_budget(len(self.members))
        self._step = 0

    # offsets: 0 psi, 1 phi, then 2+3j, 3+3j, 4+3j for test j
    def _test_bounds(self):
        mid = (self.bot + self.top) // 2
        return self.bot, mid

    def _settle(self, t: int) -> None:
        """Apply the outcome of every step that finished before round t."""
        while not self.finished:
            off = self._next_offset()
            if off is None or self.start + off >= t:
                return
            if off == 0:
                got = self.heard.get(0)
                if self.sid == self.psi:
                    got = ("flag", self.marked)
                if got and got[1]:
                    self._finish(self.psi)
                elif self.phi is None:
                    self._finish(None)
                else:
                    self._step = 1
            elif off == 1:
                got = self.heard.get(1)
                if self.sid == self.phi:
                    got = ("flag", self.marked)
                if got and got[1]:
                    self._finish(self.phi)
                else:
                    self._step = 2
                    self._maybe_shortcut()
            else:
                j = (off - 2) // 3
                if (off - 2) % 3 != 2:
                    # R1 and R2 only matter to psi, which already recorded them
                    self._step = off + 1
                    continue
                echo = self.heard.get(off)
                if self.sid == self.psi:
                    echo = self._psi_echo(j)
                lo, mid = self._test_bounds()
                if echo is not None and echo[0] == "rep" and echo[1] != self.phi:
                    self._finish(echo[1])
                    continue
                if echo is not None:
                    self.bot = mid + 1
                else:
                    self.top = mid
                    self.nonempty = True
                self.test = j + 1
                self._step = 2 + 3 * self.test
                if self.bot > self.top:
                    self._finish(None)
                else:
                    self._maybe_shortcut()

    def _next_offset(self):
        return self._step if not self.finished else None

    def _maybe_shortcut(self):
        if self.bot == self.top and self.nonempty:
            self._finish(self._by_tid(self.bot))
        elif self.bot > self.top:
            self._finish(None)

    def _by_tid(self, k: int):
        for s, v in self.tid.items():
            if v == k:
                return s
        return None

    def _finish(self, rep) -> None:
        self.result = rep
        self.finished = True

    def _psi_echo(self, j: int):
        r1 = self.heard.get(2 + 3 * j)
        if r1 is not None:
            return ("rep", r1[1])
        r2 = self.heard.get(3 + 3 * j)
        if r2 is not None and r2[1] == self.phi:
            return ("rep", self.phi)
        return None

    def speaking_offsets(self) -> list[int]:
        """Offsets at which this member may have to transmit."""
        if self.sid == self.psi:
            return [0] + [4 + 3 * j for j in range((self.budget - 2) // 3)]
        if self.sid == self.phi:
            return [1] + [3 + 3 * j for j in range((self.budget - 2) // 3)]
        if self.marked:
            return [o for j in range((self.budget - 2) // 3) for o in (2 + 3 * j, 3 + 3 * j)]
        return []

    def on_round(self, t: int):
        self._settle(t)
        if self.finished or t != self.start + self._step:
            return None
        off = self._step
        if off == 0:
            if self.sid == self.psi:
                return self._msg("flag", self.marked)
            return None
        if off == 1:
            if self.sid == self.phi:
                return self._msg("flag", self.marked)
            return None
        lo, mid = self._test_bounds()
        phase = (off - 2) % 3
        in_t = self.marked and self.sid in self.tid and lo <= self.tid[self.sid] <= mid
        if phase == 0 and in_t:
            return self._msg("rep", self.sid)
        if phase == 1 and (in_t or self.sid == self.phi):
            return self._msg("rep", self.sid)
        if phase == 2 and self.sid == self.psi:
            echo = self._psi_echo(self.test)
            if echo is not None:
                return self._msg("rep", echo[1])
        return None

    def _msg(self, kind, value):
        return Message("echo", self.sid, self.members[self.sid], False, (self.key, kind, value))

    def on_receive(self, t: int, msg: Message) -> None:
        if msg.kind != "echo" or msg.body[0] != self.key:
            return
        off = t - self.start
        if 0 <= off < self.budget:
            self.heard[off] = (msg.body[1], msg.body[2])

    def outcome(self, t: int):
        self._settle(t)
        return self.result if self.finished else "pending"
