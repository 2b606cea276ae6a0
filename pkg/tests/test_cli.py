import csv
import json

import pytest

from sinrcast.cli import BENCH_COLUMNS, EXIT_BUDGET, EXIT_INPUT, EXIT_INVARIANT, EXIT_OK, main
from sinrcast.geometry import load_network, stats


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_gen_chain_and_grid(tmp_path):
    assert main(["gen", "chain:k=5,spacing=0.9", "--out", str(tmp_path / "c.json")]) == EXIT_OK
    st = stats(load_network(tmp_path / "c.json"))
    assert (st.D, st.Delta) == (4, 2)
    assert main(["gen", "grid:w=3,h=3,spacing=0.7", "--out", str(tmp_path / "g.json")]) == EXIT_OK
    assert stats(load_network(tmp_path / "g.json")).Delta == 8


def test_gen_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["gen", "random-connected:n=50,boxes=25", "--seed", "7", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_gen_bad_spec():
    assert main(["gen", "nosuch:k=1"]) == EXIT_INPUT
    assert main(["gen", "chain:k"]) == EXIT_INPUT


def test_run_and_verify(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["run", "--net", "chain:k=6", "--alg", "gran-ubr", "--snapshots", "boundaries", "--out", str(out)])
    assert code == EXIT_OK
    summ = json.loads((out / "summary.json").read_text())
    assert summ["informed"] == 6 and summ["complete"]
    capsys.readouterr()
    assert main(["verify", "--net", str(out / "network.json"), str(out / "trace.jsonl")]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(l.startswith("PASS") for l in lines)


def test_verify_detects_deleted_delivery(tmp_path, capsys):
    out = tmp_path / "run"
    main(["run", "--net", "chain:k=4", "--alg", "gran-ubr", "--out", str(out)])
    lines = (out / "trace.jsonl").read_text().splitlines()
    k = next(i for i, l in enumerate(lines) if '"deliveries":[{' in l)
    rec = json.loads(lines[k])
    rec["deliveries"] = rec["deliveries"][1:]
    lines[k] = json.dumps(rec)
    (out / "trace.jsonl").write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert main(["verify", "--net", str(out / "network.json"), str(out / "trace.jsonl")]) == EXIT_INVARIANT
    assert f"round {rec['round']}" in capsys.readouterr().out


def test_size_ubr_progress_csv(tmp_path):
    out = tmp_path / "s"
    code = main(["run", "--net", "chain:k=4,id_bound=128", "--alg", "size-ubr", "--snapshots", "boundaries",
                 "--out", str(out)])
    assert code == EXIT_OK
    rows = read_csv(out / "progress.csv")
    assert rows and list(rows[0]) == ["block", "informed", "groups", "tuples", "stable_blocks", "pi"]


def test_alpha_two_is_an_input_error():
    assert main(["run", "--net", "chain:k=3", "--alg", "size-ubr", "--alpha", "2"]) == EXIT_INPUT


def test_mode_mismatch():
    assert main(["run", "--net", "chain:k=3", "--alg", "gran-ubr", "--mode", "adhoc"]) == EXIT_INPUT
    assert main(["run", "--net", "chain:k=3", "--alg", "general", "--mode", "local"]) == EXIT_INPUT


def test_budget_exit_code():
    assert main(["run", "--net", "chain:k=6", "--alg", "gran-ubr", "--max-rounds", "5"]) == EXIT_BUDGET


def test_general_on_fan_member(tmp_path, capsys):
    assert main(["adversary", "--family", "fan", "--delta", "8", "--D", "3", "--alg", "probe-turns",
                 "--export", str(tmp_path / "fan"), "--out", str(tmp_path / "adv.csv")]) == EXIT_OK
    capsys.readouterr()
    code = main(["run", "--net", str(tmp_path / "fan" / "fan_3.json"), "--alg", "general"])
    assert code == EXIT_OK
    summ = json.loads(capsys.readouterr().out)
    assert summ["complete"] and summ["rounds"] > 0
    rows = read_csv(tmp_path / "adv.csv")
    assert rows[0]["algorithm"] == "probe-turns" and int(rows[0]["forced_rounds"]) >= int(rows[0]["bound"])


def test_bench_grid(tmp_path, monkeypatch):
    monkeypatch.setenv("SINRCAST_THREADS", "2")
    suite = {"items": [
        {"alg": "diam-ubr", "gen": "box-chain", "vary": {"boxes": [5, 9, 17]}, "fixed": {"occupancy": 2},
         "opts": {"n_bound": 64}},
        {"alg": "gran-ubr", "net": "chain:k=3"},
    ]}
    (tmp_path / "suite.json").write_text(json.dumps(suite))
    out = tmp_path / "bench.csv"
    assert main(["bench", str(tmp_path / "suite.json"), "--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    assert list(rows[0]) == BENCH_COLUMNS
    assert [int(r["D"]) for r in rows[:3]] == [4, 8, 16]
    rounds = [int(r["rounds"]) for r in rows[:3]]
    assert rounds == sorted(rounds)
    assert all(r["status"] == "ok" and r["informed"] == r["n"] for r in rows)
    first = out.read_bytes()
    monkeypatch.setenv("SINRCAST_THREADS", "1")
    main(["bench", str(tmp_path / "suite.json"), "--out", str(out)])
    strip = lambda b: [r[:-2] for r in csv.reader(b.decode().splitlines())]
    assert strip(first) == strip(out.read_bytes())


def test_bench_missing_suite(tmp_path):
    assert main(["bench", str(tmp_path / "none.json")]) == EXIT_INPUT


def test_missing_net_file_is_input_error():
    assert main(["run", "--alg", "gran-ubr"]) == EXIT_INPUT
