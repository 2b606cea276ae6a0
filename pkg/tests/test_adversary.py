import itertools
import math

import pytest

from conftest import brute_receptions
from sinrcast.adversary import (AllTransmit, TakeTurns, adversary_run, block_size, build_chain_family,
                                build_fan_family, chain_gadgets, export_family, id_search)
from sinrcast.engine import Message, Protocol, StationProgram, run
from sinrcast.errors import ContractViolation, InvalidArgument
from sinrcast.geometry import ModelParams, load_network, stats


def test_block_size():
    assert block_size(3) == 3
    assert block_size(4) == 4
    assert block_size(2.5) == 3


def gadget_points(g):
    return {"s": g.source, "v1": g.v1, "v2": g.v2, "w": g.w}


@pytest.mark.parametrize("alpha", [2.5, 3.0, 4.0])
def test_chain_gadget_blocking_brute_force(alpha):
    p = ModelParams(alpha=alpha)
    net = build_chain_family(3, params=p)
    for g in chain_gadgets(net, 3):
        pts = gadget_points(g)
        both = brute_receptions(pts, {"v1", "v2"}, p)
        assert not any(u == "w" for u, _ in both)
        for v in ("v1", "v2"):
            assert ("w", v) in brute_receptions(pts, {v}, p)
        assert ("w", "s") not in brute_receptions(pts, {"s"}, p)


def test_chain_eccentricity_two_per_gadget():
    for D in (1, 4, 7):
        assert stats(build_chain_family(D)).D == 2 * D


def test_chain_ids_validated():
    with pytest.raises(InvalidArgument):
        build_chain_family(2, N=6)
    with pytest.raises(InvalidArgument):
        build_chain_family(0)


def test_id_search_takes_worst_case():
    worst, ids = id_search(TakeTurns, 3, 40, trials=5, seed=1)
    assert len(ids) == 10
    assert worst >= 2 * 3


def fan_points(fam, choices):
    return dict(zip(fam.id_list(), fam.points(choices)))


@pytest.mark.parametrize("delta", [8, 12])
def test_fan_crowded_rounds_reach_no_w(delta):
    fam = build_fan_family(delta, 3)
    relays, _ = fam.layer_ids(0)
    p = fam.params
    for j in range(delta):
        pts = fan_points(fam, [j])
        w = fam.layer_ids(0)[1]
        # lone relay v_j reaches w, other lone relays do not
        for i, v in enumerate(relays):
            assert ((w, v) in brute_receptions(pts, {v}, p)) == (i == j)
    for k in range(fam.c + 1, min(delta, fam.c + 2) + 1):
        for T in itertools.combinations(relays, k):
            for j in range(delta):
                pts = fan_points(fam, [j])
                w = fam.layer_ids(0)[1]
                assert not any(u == w for u, _ in brute_receptions(pts, set(T), p))


def test_fan_turns_forced_per_layer():
    fam = build_fan_family(8, 5)
    res = adversary_run(TakeTurns, fam, max_rounds=400)
    bound = 8 // 3 - 1
    assert res.bound == fam.layers * bound
    assert res.forced_rounds >= res.bound
    prev = -1
    for lay in res.layers:
        assert lay.forced - max(prev, 0) >= bound
        prev = lay.forced


def test_fan_all_transmit_never_delivers():
    res = adversary_run(AllTransmit, build_fan_family(8, 3), max_rounds=200)
    assert res.forced_rounds is None
    assert res.row()["forced_rounds"] == "inf"


class _Counter:
    n = 0


class Restless(Protocol):
    """Transmits at a round that shifts with every instantiation."""

    name = "restless"

    def __init__(self):
        _Counter.n += 1
        self.k = _Counter.n

    def program(self, view):
        k = self.k

        class Prog(StationProgram):
            def on_receive(self, t, msg):
                if msg.data and not self.informed:
                    self.informed = True
                    self.wake = t + 1

            def on_round(self, t):
                self.wake = t + 1 if t < 40 else None
                if t == 0 or (t % (k % 5 + 2) == 0):
                    return Message("x", self.id, view.position, True)
                return None

        return Prog(view)


def test_divergent_histories_are_rejected():
    with pytest.raises(ContractViolation):
        adversary_run(Restless, build_fan_family(8, 3), max_rounds=60)


def test_export_family(tmp_path):
    fam = build_fan_family(8, 5)
    manifest = export_family(fam, tmp_path)
    assert manifest.exists()
    files = sorted(tmp_path.glob("fan_*.json"))
    assert len(files) == 8
    net = load_network(files[0])
    assert net.n == fam.size
    assert stats(net).D == 2 * fam.layers


def test_fan_rejects_small_delta():
    with pytest.raises(InvalidArgument):
        build_fan_family(3, 5)
