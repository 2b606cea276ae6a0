import itertools
import random

import pytest
from hypothesis import given, strategies as st

from conftest import brute_receptions
from sinrcast import generators as gen
from sinrcast.adversary import build_fan_family
from sinrcast.engine import Message, StationProgram, Trace, receives, run, simulate_round, sinr_value
from sinrcast.errors import ContractViolation, InvalidArgument, ModelViolation
from sinrcast.geometry import ModelParams, Network, Station
from sinrcast.local_broadcast import GranUBr


def line(dists, params=None):
    """Stations on the x axis at the given coordinates, ids 1..k."""
    params = params or ModelParams()
    return Network(params, tuple(Station(i + 1, x, 0.0) for i, x in enumerate(dists)), 1, len(dists),
                   require_connected=False)


def test_sinr_value_examples():
    p = ModelParams(alpha=3, epsilon=0.5, power=1, noise=1)
    net = line([0.0, 1.0], p)
    assert sinr_value(1, 2, {1}, net) == pytest.approx(1.0)
    d = 0.7
    net = Network(p, (Station(1, -d, 0), Station(2, d, 0), Station(3, 0, 0)), 1, 3, require_connected=False)
    expect = d ** -3 / (1 + d ** -3)
    assert sinr_value(1, 3, {1, 2}, net) == pytest.approx(expect)
    assert sinr_value(2, 3, {1, 2}, net) == pytest.approx(expect)


def test_sinr_value_errors():
    net = line([0.0, 0.5])
    with pytest.raises(InvalidArgument):
        sinr_value(1, 2, {2}, net)
    with pytest.raises(InvalidArgument):
        sinr_value(1, 1, {1}, net)


def test_receives_examples():
    p = ModelParams(alpha=3, epsilon=0.1)
    assert 0.9 ** -3 == pytest.approx(1.3717, abs=1e-4)
    assert 0.98 ** -3 == pytest.approx(1.0625, abs=1e-4)
    assert receives(1, 2, {1}, line([0.0, 0.9], p))
    assert not receives(1, 2, {1}, line([0.0, 0.98], p))
    assert not receives(1, 2, {1, 2}, line([0.0, 0.5], p))


def test_fan_three_transmitters_block_every_w():
    fam = build_fan_family(4, 3)
    for j in range(4):
        net = fam.member([j])
        relays, w = fam.layer_ids(0)
        for T in itertools.combinations(relays, 3):
            assert all(sinr_value(v, w, set(T), net) < 1 for v in T)


def test_simulate_round_examples(params):
    net = gen.grid(2, 2, 0.5)
    assert simulate_round(net, []) == []
    got = {d.receiver for d in simulate_round(net, [1])}
    assert got == {2, 3, 4}
    g = params.pivotal
    net = Network(params, (Station(1, 0.2 * g, 0.5 * g), Station(2, 0.8 * g, 0.5 * g), Station(3, 0.5 * g, 0.9 * g)),
                  1, 3)
    assert simulate_round(net, [1, 2]) == []
    with pytest.raises(InvalidArgument):
        simulate_round(net, [1, 1])


def test_simulate_round_near_threshold_is_loud():
    p = ModelParams()
    net = line([0.0, p.range], p)
    with pytest.raises(ModelViolation):
        simulate_round(net, [1])


@given(st.integers(2, 40), st.integers(1, 12), st.integers(0, 10 ** 6), st.sampled_from([2.5, 3.0, 4.0]),
       st.data())
def test_deliveries_match_brute_force(n, boxes, seed, alpha, data):
    p = ModelParams(alpha=alpha)
    net = gen.random_connected(n, boxes, seed, params=p)
    k = data.draw(st.integers(1, n))
    senders = random.Random(seed).sample(list(net.ids), k)
    pts = {s.id: s.position for s in net.stations}
    try:
        got = {(d.receiver, d.sender) for d in simulate_round(net, senders)}
    except ModelViolation:
        return
    assert got == brute_receptions(pts, set(senders), p)
    # beta >= 1: one sender per receiver at most
    receivers = [u for u, _ in got]
    assert len(receivers) == len(set(receivers))


class Once(StationProgram):
    """Transmit once, in the round after being informed."""

    sent = False

    def on_receive(self, t, msg):
        if msg.data and not self.informed:
            self.informed = True
            self.wake = t + 1

    def on_round(self, t):
        self.wake = None
        self.sent = True
        return Message("m", self.id, self.view.position, True)


class Eager(StationProgram):
    def start(self, informed):
        self.informed = informed
        self.wake = 0

    def on_round(self, t):
        self.wake = None
        return Message("m", self.id, self.view.position, True)


def test_run_single_station():
    net = gen.chain(1)
    tr = run(net, Once, 10)
    assert tr.complete and tr.informed == {net.source} and tr.rounds == 0


def test_run_edge_source_transmits_once():
    net = gen.chain(2)
    tr = run(net, Once, 10)
    assert tr.complete and tr.informed_at[2] == 0 and tr.rounds == 1
    assert tr.records[0] == (0, (1,), ((2, 1),))


def test_run_rejects_spontaneous_transmission():
    with pytest.raises(ContractViolation, match="station 2"):
        run(gen.chain(2), Eager, 10)


def test_run_rejects_bad_budget():
    with pytest.raises(InvalidArgument):
        run(gen.chain(2), Once, 0)
    with pytest.raises(InvalidArgument):
        run(gen.chain(2), Once, 5, snapshots="verbose")


def test_gran_ubr_chain_and_trace_round_trip(tmp_path):
    net = gen.chain(10)
    tr = run(net, GranUBr(2), 10 ** 8, snapshots="boundaries", stop="informed")
    assert tr.complete and not tr.flags
    tr2 = run(net, GranUBr(2), 10 ** 8, snapshots="boundaries", stop="informed")
    assert tr.digest() == tr2.digest()
    tr.write_jsonl(tmp_path / "t.jsonl", snapshots=True)
    back = Trace.read_jsonl(tmp_path / "t.jsonl")
    assert back.records == [(t, tuple(s), tuple(d)) for t, s, d in tr.records]
    assert back.informed_at == tr.informed_at and back.meta["protocol"] == "gran-ubr"
    (tmp_path / "bad.jsonl").write_text("{\"what\": 1}\n")
    with pytest.raises(InvalidArgument):
        Trace.read_jsonl(tmp_path / "bad.jsonl")


def test_uninformed_station_hears_but_stays_silent_until_next_round():
    net = gen.chain(3)
    tr = run(net, Once, 10)
    assert tr.informed_at == {1: -1, 2: 0, 3: 1}
    assert [t for t, _, _ in tr.records] == [0, 1, 2]
    assert all(p.sent for p in tr.programs.values())
