"""Name -> protocol registry and generator specs shared by the CLI and the tests."""

from __future__ import annotations

import math

from . import generators
from .adhoc import GeneralBroadcast, LeaderElection, SizeUBr
from .adversary import AllTransmit, TakeTurns, build_chain_family
from .errors import InvalidArgument
from .geometry import ModelParams, granularity
from .local_broadcast import DiamUBr, GranUBr

LOCAL = {"gran-ubr", "diam-ubr"}


def _gran(net, opts):
    g = opts.get("g") or max(1.0, granularity(net))
    return GranUBr(g, n=opts.get("n"))


ALGORITHMS = {
    "gran-ubr": _gran,
    "diam-ubr": lambda net, opts: DiamUBr(n_bound=opts.get("n_bound")),
    "size-ubr": lambda net, opts: SizeUBr(n=opts.get("n"), N=opts.get("N")),
    "general": lambda net, opts: GeneralBroadcast(N=opts.get("N"), nhat=opts.get("nhat"), rounds=opts.get("rounds")),
    "leader-election": lambda net, opts: LeaderElection(nhat=opts.get("nhat"), N=opts.get("N")),
    "probe-all": lambda net, opts: AllTransmit(),
    "probe-turns": lambda net, opts: TakeTurns(),
}

LIBRARY = ("gran-ubr", "diam-ubr", "size-ubr", "general")


def make_protocol(name: str, network, opts: dict | None = None, mode: str = "auto"):
    if name not in ALGORITHMS:
        raise InvalidArgument(f"unknown algorithm {name!r}; choose from {', '.join(sorted(ALGORITHMS))}")
    if mode == "local" and name not in LOCAL:
        raise InvalidArgument(f"{name} runs without local knowledge")
    if mode == "adhoc" and name in LOCAL:
        raise InvalidArgument(f"{name} needs local knowledge")
    return ALGORITHMS[name](network, dict(opts or {}))


def _num(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse_spec(spec: str):
    """'name:key=value,key=value' -> (name, kwargs)."""
    name, _, rest = spec.partition(":")
    kw = {}
    for part in filter(None, rest.split(",")):
        key, eq, val = part.partition("=")
        if not eq:
            raise InvalidArgument(f"bad generator argument {part!r} (expected key=value)")
        kw[key.strip().replace("-", "_")] = _num(val.strip())
    return name.strip(), kw


def _random(n, boxes=None, seed=0, **kw):
    return generators.random_connected(int(n), int(boxes or max(1, n // 2)), int(seed), **kw)


GENERATORS = {
    "chain": generators.chain,
    "grid": generators.grid,
    "cluster": generators.cluster,
    "random": _random,
    "random-connected": _random,
    "box-chain": generators.box_chain,
    "strip": generators.strip,
    "clique-chain": generators.clique_chain,
    "gadget-chain": lambda D, N=None, params=None: build_chain_family(int(D), N and int(N), params),
}

_INT_ARGS = {"k", "w", "h", "n", "length", "width", "size", "boxes", "occupancy", "cliques", "seed", "id_bound", "id_seed", "D", "N"}


def generate(spec: str, params: ModelParams | None = None, seed: int | None = None):
    name, kw = parse_spec(spec)
    if name not in GENERATORS:
        raise InvalidArgument(f"unknown generator {name!r}; choose from {', '.join(sorted(GENERATORS))}")
    for k in list(kw):
        if k in _INT_ARGS:
            if not float(kw[k]).is_integer():
                raise InvalidArgument(f"{k} must be an integer")
            kw[k] = int(kw[k])
    if seed is not None and name in ("random", "random-connected", "box-chain", "strip") and "seed" not in kw:
        kw["seed"] = seed
    try:
        return GENERATORS[name](params=params or ModelParams(), **kw)
    except TypeError as exc:
        raise InvalidArgument(f"bad arguments for {name}: {exc}") from exc


def log2(x: float) -> float:
    return math.log2(max(2.0, x))
