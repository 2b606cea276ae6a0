"""Broadcast schedules, dilution, strongly-selective families and model constants."""

from __future__ import annotations

import itertools
import json
import math
import random
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidArgument, UnsupportedParameter

# Family sizes returned by build_ssf never exceed SSF_SIZE_CONSTANT * k^2 * log2(N).
SSF_SIZE_CONSTANT = 2.0


@dataclass(frozen=True)
class BroadcastSchedule:
    """Row v-1 of ``bits`` is the transmission pattern of station v."""

    id_bound: int
    bits: np.ndarray

    def __post_init__(self):
        if self.bits.shape[0] != self.id_bound:
            raise InvalidArgument("schedule needs one row per id")

    @property
    def length(self) -> int:
        return self.bits.shape[1]

    def transmits(self, v: int, t: int) -> bool:
        return bool(self.bits[v - 1, t % self.length])


@dataclass(frozen=True)
class GeoBroadcastSchedule:
    """bits[v-1, a, b] is the pattern of station v in a box with coordinates = (a, b) mod delta."""

    id_bound: int
    delta: int
    bits: np.ndarray

    @property
    def length(self) -> int:
        return self.bits.shape[3]

    def transmits(self, v: int, box, t: int) -> bool:
        a, b = box[0] % self.delta, box[1] % self.delta
        return bool(self.bits[v - 1, a, b, t % self.length])


@dataclass(frozen=True)
class SsfFamily:
    id_bound: int
    k: int
    sets: tuple

    @property
    def size(self) -> int:
        return len(self.sets)

    def schedule(self) -> BroadcastSchedule:
        bits = np.zeros((self.id_bound, max(1, len(self.sets))), dtype=bool)
        for i, s in enumerate(self.sets):
            for v in s:
                bits[v - 1, i] = True
        return BroadcastSchedule(self.id_bound, bits)

    def membership(self) -> dict:
        """id -> sorted tuple of indices of the sets containing it."""
        out = {v: [] for v in range(1, self.id_bound + 1)}
        for i, s in enumerate(self.sets):
            for v in s:
                out[v].append(i)
        return {v: tuple(ix) for v, ix in out.items()}

    def to_dict(self) -> dict:
        return {"N": self.id_bound, "k": self.k, "sets": [sorted(s) for s in self.sets]}

    @classmethod
    def from_dict(cls, data: dict) -> "SsfFamily":
        try:
            n, k = int(data["N"]), int(data["k"])
            sets = tuple(frozenset(int(v) for v in s) for s in data["sets"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgument(f"malformed ssf description: {exc}") from exc
        for s in sets:
            if any(not 1 <= v <= n for v in s):
                raise InvalidArgument("ssf set contains an id outside [1, N]")
        return cls(n, k, sets)


def save_ssf(family: SsfFamily, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(family.to_dict(), fh)
        fh.write("\n")


def load_ssf(path) -> SsfFamily:
    with open(path, encoding="utf-8") as fh:
        return SsfFamily.from_dict(json.load(fh))


def _primes_from(start: int):
    p = max(2, start)
    while True:
        if all(p % q for q in range(2, math.isqrt(p) + 1)):
            yield p
        p += 1


def _residue_primes(n: int, k: int, p0: int) -> list:
    # z and y != z agree modulo at most floor(log_p0(n-1)) primes >= p0
    collisions = 0
    if n > 2:
        collisions = int(math.log(n - 1) / math.log(p0) + 1e-12)
    return list(itertools.islice(_primes_from(p0), (k - 1) * collisions + 1))


def _residue_sets(n: int, k: int, p0: int) -> list:
    sets = []
    for p in _residue_primes(n, k, p0):
        for r in range(p):
            s = frozenset(x for x in range(1, n + 1) if x % p == r)
            if s:
                sets.append(s)
    return sets


def _exhaustive_ok(n: int, k: int, masks: list) -> bool:
    full = (1 << n) - 1
    for z in range(n):
        bit = 1 << z
        free = [full & ~m for m in masks if m & bit]
        if not free:
            return False
        others = [i for i in range(n) if i != z]
        size = min(k - 1, len(others))
        for ys in itertools.combinations(others, size):
            y = 0
            for i in ys:
                y |= 1 << i
            if not any(y & f == y for f in free):
                return False
    return True


def _exhaustive_feasible(n: int, k: int) -> bool:
    return n <= 20 and k <= 4


def _prune(n: int, k: int, sets: list) -> list:
    masks = [sum(1 << (v - 1) for v in s) for s in sets]
    keep = list(range(len(sets)))
    for i in sorted(range(len(sets)), key=lambda i: (bin(masks[i]).count("1"), i)):
        trial = [j for j in keep if j != i]
        if _exhaustive_ok(n, k, [masks[j] for j in trial]):
            keep = trial
    return [sets[j] for j in keep]


def build_ssf(N: int, k: int) -> SsfFamily:
    """Deterministic (N,k)-strongly-selective family.

    Residue classes modulo a run of primes, or the N singletons when those are
    smaller.  Small instances are pruned greedily under the exhaustive check.
    """
    if N < 1 or k < 1:
        raise InvalidArgument("need N >= 1 and k >= 1")
    if k > N:
        warnings.warn(f"k={k} exceeds N={N}; clamping", stacklevel=2)
        k = N
    if k == 1 or N == 1:
        return SsfFamily(N, k, (frozenset(range(1, N + 1)),))
    best_size, best_p0 = N, None
    for p0 in range(2, N + 1):
        size = sum(min(p, N) for p in _residue_primes(N, k, p0))
        if size < best_size:
            best_size, best_p0 = size, p0
        if p0 > best_size:
            break
    if best_p0 is None:
        best = [frozenset([v]) for v in range(1, N + 1)]
    else:
        best = _residue_sets(N, k, best_p0)
    if _exhaustive_feasible(N, k):
        best = _prune(N, k, best)
    return SsfFamily(N, k, tuple(best))


def verify_ssf(family: SsfFamily, samples: int = 100_000, seed: int = 0) -> bool:
    n, k = family.id_bound, min(family.k, family.id_bound)
    masks = [sum(1 << (v - 1) for v in s) for s in family.sets]
    if _exhaustive_feasible(n, k):
        return _exhaustive_ok(n, k, masks)
    rng = random.Random(seed)
    member = family.membership()
    sets = [frozenset(s) for s in family.sets]
    for _ in range(samples):
        z_set = rng.sample(range(1, n + 1), k)
        z = z_set[0]
        rest = set(z_set[1:])
        if not any(sets[i].isdisjoint(rest) for i in member[z]):
            return False
    return True


def ssf_size_bound(N: int, k: int) -> float:
    return SSF_SIZE_CONSTANT * k * k * max(1.0, math.log2(N))


def dilute(schedule: BroadcastSchedule, delta: int, cell: float | None = None) -> GeoBroadcastSchedule:
    """Spread every round over delta^2 slots, one per box class (i mod delta, j mod delta).

    ``cell`` names the grid the classes refer to; the bits do not depend on it.
    """
    if delta < 1:
        raise InvalidArgument("delta must be >= 1")
    n, t = schedule.bits.shape
    out = np.zeros((n, delta, delta, t * delta * delta), dtype=bool)
    for a in range(delta):
        for b in range(delta):
            out[:, a, b, a * delta + b::delta * delta] = schedule.bits
    return GeoBroadcastSchedule(schedule.id_bound, delta, out)


def _partial_zeta(s: float, n: int) -> float:
    return math.fsum(i ** (-s) for i in range(1, n + 1))


def flat_sum(alpha: float, n: int) -> float:
    """1 + sum_{i<=n} i^(1-alpha); bounded for alpha > 2 and logarithmic for alpha = 2."""
    return 1.0 + _partial_zeta(alpha - 1, max(1, n))


def flat_constant(alpha: float, epsilon: float, n: int, beta: float = 1.0) -> int:
    if alpha < 2:
        raise InvalidArgument("alpha must be >= 2")
    if epsilon <= 0 or n < 1:
        raise InvalidArgument("need epsilon > 0 and n >= 1")
    slack = 1.0 - 1.0 / (1.0 + epsilon)
    inner = 8.0 * flat_sum(alpha, n) * beta / slack
    return math.ceil(3.0 + 2.0 * math.sqrt(2.0) * inner ** (1.0 / alpha))


_TAIL_TERMS = 1_000_000


@lru_cache(maxsize=None)
def _tail_table(alpha: float) -> np.ndarray:
    """tails[d] bounds sum_{i>d} i^(1-alpha) for d < _TAIL_TERMS."""
    i = np.arange(1, _TAIL_TERMS + 1, dtype=float)
    terms = i ** (1.0 - alpha)
    # remainder beyond the table: integral bound from _TAIL_TERMS to infinity
    rest = _TAIL_TERMS ** (2.0 - alpha) / (alpha - 2.0)
    # suffix[d] = sum of terms[d:] = sum_{i > d} i^(1-alpha)
    suffix = np.cumsum(terms[::-1])[::-1]
    return suffix + rest


def selector_constant(alpha: float, epsilon: float, beta: float = 1.0, noise: float = 1.0) -> int:
    """Smallest d whose interference tail sum stays below min(1, eps)/(16 beta 2^(alpha/2)).

    ``noise`` cancels once distances are measured in pivotal cells; it is kept
    in the signature so callers can pass a full parameter set.
    """
    if alpha <= 2:
        raise UnsupportedParameter("selector dilution needs alpha > 2")
    if epsilon <= 0 or beta < 1 or noise <= 0:
        raise InvalidArgument("need epsilon > 0, beta >= 1, noise > 0")
    target = min(1.0, epsilon) / (16.0 * beta * 2.0 ** (alpha / 2.0))
    tails = _tail_table(float(alpha))
    ok = np.nonzero(tails <= target)[0]
    if ok.size == 0:
        raise UnsupportedParameter(f"alpha={alpha} too close to 2 for a tabulated selector constant")
    return max(1, int(ok[0]))


def selector_family(N: int, d: int) -> SsfFamily:
    """The (N, (2d+1)^2)-ssf used by the ad-hoc algorithms, with k clamped to N."""
    return build_ssf(N, min(N, (2 * d + 1) ** 2))
