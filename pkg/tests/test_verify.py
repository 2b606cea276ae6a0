import copy

import pytest

from sinrcast import generators as G
from sinrcast.adhoc import SizeUBr
from sinrcast.adversary import TakeTurns
from sinrcast.engine import Trace, run
from sinrcast.errors import InvalidArgument
from sinrcast.local_broadcast import GranUBr
from sinrcast.verify import CheckResult, check_box_states, check_groups, replay, verify


@pytest.fixture(scope="module")
def gran():
    net = G.box_chain(4, 2)
    return net, run(net, GranUBr(2), 10 ** 8, stop="informed", snapshots="boundaries")


@pytest.fixture(scope="module")
def size():
    net = G.grid(3, 2, id_bound=128)
    return net, run(net, SizeUBr(N=128), 10 ** 8, stop="informed", snapshots="boundaries")


def test_untampered_trace_passes(gran, tmp_path):
    net, tr = gran
    tr.write_jsonl(tmp_path / "t.jsonl", snapshots=True)
    back = Trace.read_jsonl(tmp_path / "t.jsonl")
    rep = verify(back, net)
    assert rep.ok
    assert [r.ok for r in rep.results] == [True, True, True]
    assert back.digest() == tr.digest()


def tampered(tr, fn):
    out = copy.deepcopy(tr)
    fn(out)
    return out


def test_dropped_delivery_fails_replay(gran):
    net, tr = gran
    k = next(i for i, rec in enumerate(tr.records) if rec[2])

    def drop(t):
        rnd, senders, dl = t.records[k]
        t.records[k] = (rnd, senders, dl[1:])

    res = replay(tampered(tr, drop).records, net)
    assert res.ok is False and "missing" in res.detail


def test_added_delivery_fails_replay(gran):
    net, tr = gran
    far = max(net.ids)

    def add(t):
        rnd, senders, dl = t.records[0]
        t.records[0] = (rnd, senders, tuple(dl) + ((far, senders[0]),))

    assert replay(tampered(tr, add).records, net).ok is False


def test_mixed_box_state_detected(gran):
    net, tr = gran

    def flip(t):
        rnd, st = t.snapshots[0]
        st = dict(st)
        st[net.source] = dict(st[net.source], state="idle")
        t.snapshots[0] = (rnd, st)

    assert check_box_states(tampered(tr, flip), net).ok is False


def test_master_cycle_breaks_forest(size):
    net, tr = size
    assert all(r.ok for r in check_groups(tr, net))

    def cycle(t):
        rnd, st = t.snapshots[-1]
        st = {v: dict(s) for v, s in st.items()}
        a, b = sorted(st)[:2]
        st[a].update(M=b, L=False)
        st[b].update(M=a, L=False)
        t.snapshots[-1] = (rnd, st)

    res = {r.name: r.ok for r in check_groups(tampered(tr, cycle), net)}
    assert res["forest"] is False


def test_unsupported_without_snapshots():
    net = G.chain(4)
    tr = run(net, GranUBr(2), 10 ** 8, stop="informed")
    rep = verify(tr, net)
    assert rep.ok
    assert [r.ok for r in rep.results] == [True, None, None]
    assert rep.lines()[1].startswith("UNSUPPORTED")


def test_probe_gets_replay_only():
    net = G.chain(4)
    rep = verify(run(net, TakeTurns(), 100, stop="informed"), net)
    assert [r.name for r in rep.results] == ["replay"]


def test_flags_fail_the_report():
    net = G.chain(2)
    tr = run(net, TakeTurns(), 10)
    tr.flags.append("station 1: something odd")
    rep = verify(tr, net)
    assert not rep.ok and rep.results[-1].name == "program-flags"


def test_check_result_lines():
    assert CheckResult("x", True, "fine").line() == "PASS x: fine"
    assert CheckResult("x", False).line() == "FAIL x"
    assert CheckResult("x", None, "n/a").line() == "UNSUPPORTED x: n/a"


def test_bad_jsonl(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text("{not json\n")
    with pytest.raises(InvalidArgument):
        Trace.read_jsonl(p)
