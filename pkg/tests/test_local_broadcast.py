import itertools
import math
from fractions import Fraction

import pytest

from sinrcast import generators as G
from sinrcast.echo import EchoRun, echo_budget
from sinrcast.election import GranElection, election_length
from sinrcast.engine import run, simulate_round
from sinrcast.errors import InvalidArgument
from sinrcast.geometry import ModelParams, box_of, stats
from sinrcast.local_broadcast import DiamUBr, GranUBr, next_pow2
from sinrcast.nogran import check_phase_invariants, nogran, phase_constants, scale
from sinrcast.schedules import flat_constant
from sinrcast.verify import check_box_states, check_coloring, check_phase_progress

P = ModelParams()
GAMMA = P.pivotal


# ---------------------------------------------------------------- nogran

def test_nogran_single_station():
    c = scale(3, 4)
    col = nogran([(7, (0.1, 0.2))], c, GAMMA, 3, 4)
    assert len(col.squares) == 1
    sq = col.squares[0]
    assert sq.members == (7,) and sq.side == 1 and sq.color[0] == 0


def test_nogran_adjacent_pair_merges_then_colors():
    c = scale(3, 2)
    a = GAMMA / c
    col = nogran([(1, (0.1, 0.1)), (2, (0.1 + 1.5 * a, 0.1))], c, GAMMA, 3, 2)
    assert len(col.squares) == 1
    assert col.squares[0].members == (1, 2) and col.squares[0].color[0] == 1
    assert col.phases[0] == [(1, 1), (1, 1)]
    assert not check_phase_invariants(col)


def fine_span(members, c):
    xs = [math.floor(Fraction(x) * c / Fraction(GAMMA)) for x, _ in members]
    ys = [math.floor(Fraction(y) * c / Fraction(GAMMA)) for _, y in members]
    return min(xs), min(ys), max(xs) + 1, max(ys) + 1


def gap(a0, a1, b0, b1):
    return max(0, b0 - a1, a0 - b1)


def test_nogran_eight_clusters_colored_together():
    nb = 64
    c = scale(3, nb)
    centers = [(x, y) for x in (0.07, 0.09, 0.11) for y in (0.07, 0.09, 0.11)][:8]
    stations, sid = [], 1
    groups = []
    for cx, cy in centers:
        x, grp = cx, []
        for _ in range(8):
            stations.append((sid, (x, cy)))
            grp.append((x, cy))
            x = math.nextafter(x, 1.0)
            sid += 1
        groups.append(grp)
    col = nogran(stations, c, GAMMA, 3, nb)
    assert len(col.squares) == 8
    assert {sq.color[0] for sq in col.squares} == {3}
    assert all(len(sq.members) == 8 for sq in col.squares)
    assert not check_phase_invariants(col)
    _, xs = phase_constants(3, nb)
    spans = [fine_span(g, c) for g in groups]
    for s, t in itertools.combinations(spans, 2):
        assert max(gap(s[0], s[2], t[0], t[2]), gap(s[1], s[3], t[1], t[3])) >= xs[3]


def test_nogran_rejects_two_boxes():
    with pytest.raises(ValueError):
        nogran([(1, (0.1, 0.1)), (2, (0.9, 0.1))], scale(3, 2), GAMMA, 3, 2)


# ---------------------------------------------------------------- echo

def ideal_echo(members, marked, start=5):
    """Every round, a lone transmitter is heard by the whole clique; otherwise nothing is."""
    runs = {s: EchoRun(s, members, s in marked, start, "k") for s in members}
    t = start
    while any(r.outcome(t) == "pending" for r in runs.values()):
        out = {s: m for s, r in runs.items() if (m := r.on_round(t)) is not None}
        if len(out) == 1:
            (s, m), = out.items()
            for u, r in runs.items():
                if u != s:
                    r.on_receive(t, m)
        t += 1
        assert t - start <= echo_budget(len(members)) + 1
    return {r.outcome(t) for r in runs.values()}, t - start


def clique(k):
    return {s: (0.1 + 0.01 * s, 0.1 + 0.003 * (s % 3)) for s in range(1, k + 1)}


def test_echo_min_member_marked():
    got, used = ideal_echo(clique(6), {1, 4})
    assert got == {1} and used <= 1


def test_echo_empty_marked_set():
    got, used = ideal_echo(clique(8), set())
    assert got == {None} and used <= echo_budget(8)


def test_echo_single_inner_member():
    members = clique(8)
    got, used = ideal_echo(members, {5})
    assert got == {5} and used <= 2 + 3 * 3


@pytest.mark.parametrize("marked", [set(s) for r in range(4) for s in itertools.combinations(range(1, 7), r)])
def test_echo_agrees_on_a_marked_member(marked):
    got, used = ideal_echo(clique(6), marked)
    assert len(got) == 1
    rep = got.pop()
    assert (rep is None) == (not marked)
    assert rep is None or rep in marked
    assert used <= echo_budget(6)


# ---------------------------------------------------------------- gran election

def elect(points, g):
    net = G.from_points(points, P)
    h = next_pow2(g)
    d = flat_constant(P.alpha, P.epsilon, net.n, P.beta)
    progs = {s.id: GranElection(s.id, s.position, h, d, 0, GAMMA) for s in net.stations}
    for t in range(election_length(h, d)):
        tx = {sid: m for sid, p in progs.items() if (m := p.on_round(t)) is not None}
        for dl in simulate_round(net, tx):
            progs[dl.receiver].on_receive(t, dl.payload)
    out = {sid: p.outcome(election_length(h, d)) for sid, p in progs.items()}
    assert all(p.collision is None for p in progs.values())
    return net, out


def test_election_single_participant():
    h = next_pow2(1)
    e = GranElection(3, (0.1, 0.1), h, 15, 0, GAMMA)
    assert e.outcome(0) == (True, 3)


def test_election_close_pair():
    net, out = elect([(0.2, 0.2), (0.2 + P.range / 8, 0.2)], 8)
    leaders = [sid for sid, (lead, _) in out.items() if lead]
    assert len(leaders) == 1
    assert {lid for _, lid in out.values()} == {leaders[0]}


def test_election_four_boxes_in_parallel():
    pts = [((i + 0.3 + 0.07 * j) * GAMMA, (j + 0.4) * GAMMA) for i in range(2) for j in range(2)]
    pts += [(x + 0.1 * GAMMA, y + 0.05 * GAMMA) for x, y in pts]
    net, out = elect(pts, 16)
    by_box = {}
    for s in net.stations:
        by_box.setdefault(box_of(s.position, GAMMA)[:2], []).append(s.id)
    assert len(by_box) == 4
    for ids in by_box.values():
        assert sum(out[i][0] for i in ids) == 1
        assert len({out[i][1] for i in ids}) == 1 and out[ids[0]][1] in ids


# ---------------------------------------------------------------- gran-ubr

def run_local(net, proto):
    tr = run(net, proto, 10 ** 9, stop="informed", snapshots="boundaries")
    assert tr.complete and not tr.flags
    assert check_box_states(tr, net).ok is not False
    assert check_phase_progress(tr, net).ok is not False
    return tr


def test_gran_two_stations_one_phase():
    p = GranUBr(2)
    tr = run_local(G.chain(2), p)
    assert tr.rounds <= 1 + p._length


def test_gran_lone_box_goes_idle():
    tr = run(G.chain(1), GranUBr(1), 10 ** 6, snapshots="boundaries")
    assert tr.complete and tr.rounds == 0


def test_gran_chain_linear_in_d():
    ratios = []
    for D in (5, 10, 20):
        net = G.chain(D + 1)
        assert stats(net).D == D
        ratios.append(run_local(net, GranUBr(2)).rounds / D)
    assert max(ratios) / min(ratios) < 1.5


def test_gran_rounds_grow_with_granularity():
    rounds = []
    for g in (4, 16, 256):
        net = G.random_connected(12, 4, 1, min_sep=1 / g)
        rounds.append(run_local(net, GranUBr(g)).rounds)
    assert rounds[0] < rounds[1] < rounds[2]
    assert rounds[2] / rounds[0] < 8


def test_gran_rejects_bad_bound():
    with pytest.raises(InvalidArgument):
        GranUBr(0.5)


def test_gran_deterministic():
    net = G.grid(3, 3)
    assert run(net, GranUBr(4), 10 ** 8).digest() == run(net, GranUBr(4), 10 ** 8).digest()


# ---------------------------------------------------------------- diam-ubr

class DataLog(DiamUBr):
    """DiamUBr that records which stations send the broadcast payload and when."""

    def __init__(self, n_bound):
        super().__init__(n_bound)
        self.log = []

    def program(self, view):
        prog = super().program(view)
        inner = prog.on_round

        def on_round(t):
            msg = inner(t)
            if msg is not None and msg.data:
                self.log.append((t, view.id))
            return msg

        prog.on_round = on_round
        return prog


def test_diam_dense_box_with_far_neighbor():
    dense = [((0.45 + 0.07 * k) * GAMMA, (0.5 + 0.02 * (k % 3)) * GAMMA) for k in range(8)]
    pts = [(0.05 * GAMMA, 0.5 * GAMMA)] + dense + [(dense[-1][0] + 0.9 * P.range, 0.5 * GAMMA)]
    net = G.from_points(pts, P)
    far = net.ids[-1]
    assert net.source not in net.neighbors[far]
    p = DataLog(16)
    tr = run_local(net, p)
    assert 1 <= tr.informed_at[far] < 1 + p._length
    crossing = {sid for t, sid in p.log if t >= 1 and far in net.neighbors[sid] and t <= tr.informed_at[far]}
    assert len(crossing) == 1


def test_diam_tiny_separation():
    net = G.box_chain(3, 3, tight_pair=2.0 ** -20)
    assert stats(net).g == pytest.approx(2 ** 20, rel=1e-6)
    tr = run_local(net, DiamUBr(64))
    assert all(r.ok is not False for r in check_coloring(net, 64))


def test_diam_size_bound_enforced():
    with pytest.raises(InvalidArgument):
        run(G.chain(5), DiamUBr(4), 10)
