"""sinrcast command line: gen, run, verify, bench, adversary."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import adversary as adv
from .algorithms import ALGORITHMS, LIBRARY, generate, make_protocol
from .engine import Trace, run
from .errors import ContractViolation, InvalidArgument, ModelViolation, SinrcastError
from .geometry import ModelParams, Network, load_network, save_network, stats
from .verify import progress_series, verify

EXIT_OK, EXIT_BUDGET, EXIT_INVARIANT, EXIT_INPUT = 0, 2, 3, 4

BENCH_COLUMNS = ["algorithm", "n", "N", "D", "Delta", "g", "rounds", "informed", "wall_time", "status"]
PROGRESS_COLUMNS = ["block", "informed", "groups", "tuples", "stable_blocks", "pi"]


def fmt(v):
    if isinstance(v, float):
        return f"{v:.9g}"
    return "" if v is None else v


def _params(args, base: ModelParams | None = None) -> ModelParams:
    base = base or ModelParams()
    over = {k: getattr(args, k) for k in ("alpha", "epsilon") if getattr(args, k, None) is not None}
    return replace(base, **over) if over else base


def _load(args) -> Network:
    if not args.net:
        raise InvalidArgument("--net is required")
    if Path(args.net).exists():
        net = load_network(args.net)
        p = _params(args, net.params)
        if p != net.params:
            net = Network(p, net.stations, net.source, net.id_bound)
        return net
    return generate(args.net, _params(args), args.seed)


def _opts(args) -> dict:
    out = {}
    for item in args.opt or []:
        k, eq, v = item.partition("=")
        if not eq:
            raise InvalidArgument(f"bad --opt {item!r} (expected key=value)")
        try:
            out[k] = int(v)
        except ValueError:
            out[k] = float(v)
    return out


def execute(net: Network, alg: str, opts: dict, max_rounds: int, snapshots: str = "off", mode: str = "auto"):
    proto = make_protocol(alg, net, opts, mode)
    stop = "quiescent" if alg == "leader-election" else "informed"
    return run(net, proto, max_rounds, snapshots=snapshots, stop=stop)


def summary(net: Network, trace: Trace, alg: str) -> dict:
    st = stats(net)
    return {"algorithm": alg, "n": st.n, "N": net.id_bound, "D": st.D, "Delta": st.Delta, "g": st.g,
            "rounds": trace.rounds, "informed": len(trace.informed), "complete": trace.complete,
            "exhausted": trace.exhausted, "last_round": trace.last_round, "flags": trace.flags[:20],
            "params": trace.meta.get("params"), "digest": trace.digest()}


# ---------------------------------------------------------------- commands

def cmd_gen(args) -> int:
    net = generate(args.spec, _params(args), args.seed)
    if args.out:
        save_network(net, args.out)
    else:
        json.dump(net.to_dict(), sys.stdout, indent=1, sort_keys=True)
        sys.stdout.write("\n")
    return EXIT_OK


def cmd_run(args) -> int:
    net = _load(args)
    trace = execute(net, args.alg, _opts(args), args.max_rounds, args.snapshots, args.mode)
    summ = summary(net, trace, args.alg)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        trace.write_jsonl(out / "trace.jsonl", snapshots=args.snapshots != "off")
        save_network(net, out / "network.json")
        (out / "summary.json").write_text(json.dumps(summ, indent=1, sort_keys=True) + "\n")
        if args.alg == "size-ubr" and args.snapshots != "off":
            write_progress(trace, net, out / "progress.csv")
    print(json.dumps(summ, sort_keys=True))
    if trace.flags:
        return EXIT_INVARIANT
    return EXIT_OK if trace.complete else EXIT_BUDGET


def write_progress(trace, net, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(PROGRESS_COLUMNS)
        for j, p in enumerate(progress_series(trace, net)):
            wr.writerow([j, p.informed, net.n - p.merged, p.tuples, p.stable_blocks, p.pi])


def cmd_verify(args) -> int:
    net = _load(args)
    trace = Trace.read_jsonl(args.trace)
    rep = verify(trace, net)
    for line in rep.lines():
        print(line)
    return EXIT_OK if rep.ok else EXIT_INVARIANT


def _bench_items(spec) -> list:
    """Expand a suite: a list of {alg, net, opts} items, or {alg, gen, vary, fixed} grids."""
    items = spec["items"] if isinstance(spec, dict) else spec
    out = []
    for it in items:
        if "net" in it:
            out.append({"alg": it["alg"], "net": it["net"], "opts": it.get("opts", {})})
            continue
        fixed = it.get("fixed", {})
        vary = it.get("vary", {})
        combos = [{}]
        for k, vals in vary.items():
            combos = [dict(c, **{k: v}) for c in combos for v in vals]
        for c in combos:
            args = dict(fixed, **c)
            net = it["gen"] + ":" + ",".join(f"{k}={v}" for k, v in args.items())
            out.append({"alg": it["alg"], "net": net, "opts": it.get("opts", {})})
    return out


def bench_one(item, max_rounds, alpha=None, epsilon=None) -> dict:
    base = ModelParams()
    over = {k: v for k, v in (("alpha", alpha), ("epsilon", epsilon)) if v is not None}
    params = replace(base, **over) if over else base
    row = {"algorithm": item["alg"], "status": "ok"}
    try:
        net = generate(item["net"], params)
        st = stats(net)
        row.update(n=st.n, N=net.id_bound, D=st.D, Delta=st.Delta, g=st.g)
        t0 = time.perf_counter()
        trace = execute(net, item["alg"], item.get("opts", {}), max_rounds)
        row.update(rounds=trace.rounds, informed=len(trace.informed), wall_time=time.perf_counter() - t0)
        if trace.flags:
            row["status"] = "flagged"
        elif not trace.complete:
            row["status"] = "budget"
    except SinrcastError as exc:
        row["status"] = f"error: {exc}"
    return row


def threads() -> int:
    try:
        cap = int(os.environ.get("SINRCAST_THREADS", "0"))
    except ValueError:
        cap = 0
    return cap if cap > 0 else (os.cpu_count() or 1)


def cmd_bench(args) -> int:
    try:
        spec = json.loads(Path(args.suite).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidArgument(f"cannot read suite {args.suite}: {exc}") from exc
    items = _bench_items(spec)
    workers = min(threads(), max(1, len(items)))
    if workers == 1:
        rows = [bench_one(it, args.max_rounds, args.alpha, args.epsilon) for it in items]
    else:
        with ProcessPoolExecutor(workers) as pool:
            futs = [pool.submit(bench_one, it, args.max_rounds, args.alpha, args.epsilon) for it in items]
            rows = [f.result() for f in futs]
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        wr = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        wr.writeheader()
        for row in rows:
            wr.writerow({k: fmt(row.get(k)) for k in BENCH_COLUMNS})
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_BUDGET


def cmd_adversary(args) -> int:
    params = _params(args)
    algs = list(LIBRARY) + ["probe-all", "probe-turns"] if args.alg in (None, "all") else args.alg.split(",")
    if args.family == "chain":
        rows = []
        for alg in algs:
            if alg in ("gran-ubr", "diam-ubr") or alg.startswith("probe"):
                continue
            net0 = adv.build_chain_family(args.D, args.N, params)
            rounds, _ = adv.id_search(lambda: make_protocol(alg, net0, {"N": args.N}), args.D, args.N,
                                      params, args.trials, args.seed, args.max_rounds)
            rows.append({"family": "chain", "delta": 2, "D": args.D, "algorithm": alg,
                         "forced_rounds": rounds, "bound": args.D})
        _write_rows(rows, args.out)
        return EXIT_OK
    fam = adv.build_fan_family(args.delta, args.D, params, N=args.N)
    if args.export:
        adv.export_family(fam, args.export)
    results = []
    for alg in algs:
        net0 = fam.member([0] * fam.layers)
        budget = min(args.max_rounds, 1000) if alg == "probe-all" else args.max_rounds
        try:
            res = adv.adversary_run(lambda alg=alg: make_protocol(alg, net0, {"N": args.N}), fam, budget, name=alg)
        except ContractViolation as exc:
            print(f"{alg}: {exc}", file=sys.stderr)
            return EXIT_INVARIANT
        results.append(res.row())
    _write_rows(results, args.out)
    return EXIT_OK


def _write_rows(rows, path) -> None:
    cols = ["family", "delta", "D", "algorithm", "forced_rounds", "bound"]
    fh = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
    try:
        wr = csv.DictWriter(fh, fieldnames=cols)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: fmt(r[k]) for k in cols})
    finally:
        if fh is not sys.stdout:
            fh.close()


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sinrcast", description="SINR broadcast simulator and harness")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, net=True):
        if net:
            p.add_argument("--net", help="network JSON file or generator spec such as chain:k=5")
        p.add_argument("--alpha", type=float)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")

    g = sub.add_parser("gen", help="generate a network")
    g.add_argument("spec", help="chain:k=5,spacing=0.9 | grid:w=3,h=3 | random:n=50,boxes=25 | cluster:n=8,separation=0.1 | strip:n=40,length=10 ...")
    common(g, net=False)
    g.set_defaults(fn=cmd_gen)

    r = sub.add_parser("run", help="run one algorithm")
    common(r)
    r.add_argument("--alg", required=True, choices=sorted(ALGORITHMS))
    r.add_argument("--max-rounds", type=int, default=10 ** 9)
    r.add_argument("--snapshots", choices=("off", "boundaries", "full"), default="off")
    r.add_argument("--mode", choices=("auto", "local", "adhoc"), default="auto")
    r.add_argument("--opt", action="append", help="algorithm option key=value (g, n, N, nhat, rounds, n_bound)")
    r.set_defaults(fn=cmd_run)

    v = sub.add_parser("verify", help="check a recorded trace")
    common(v)
    v.add_argument("trace")
    v.set_defaults(fn=cmd_verify)

    b = sub.add_parser("bench", help="run a suite and write CSV")
    common(b, net=False)
    b.add_argument("suite", help="JSON suite file")
    b.add_argument("--max-rounds", type=int, default=10 ** 9)
    b.set_defaults(fn=cmd_bench)

    a = sub.add_parser("adversary", help="measure forced rounds on lower-bound families")
    common(a, net=False)
    a.add_argument("--family", choices=("fan", "chain"), default="fan")
    a.add_argument("--alg", help="comma separated algorithms or 'all'")
    a.add_argument("--delta", type=int, default=8)
    a.add_argument("--D", type=int, default=5)
    a.add_argument("--N", type=int, default=128)
    a.add_argument("--trials", type=int, default=5)
    a.add_argument("--max-rounds", type=int, default=10 ** 9)
    a.add_argument("--export", help="directory for the family's network files")
    a.set_defaults(fn=cmd_adversary)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "seed", None) is None:
        args.seed = 0
    try:
        return args.fn(args)
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (InvalidArgument, ModelViolation, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SinrcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
