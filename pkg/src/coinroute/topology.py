"""Cost functions, layered network specs and the benchmark network builders.

Nodes carry the cost (costs are accrued at routers, not links).  Every
benchmark is built by *role*: the two cheap ``10x`` routers of the hex
network are always the ones joined by the bridge router.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

SOURCE = "source"
ROUTER = "cost-router"
DUMMY = "dummy"
DESTINATION = "destination"
NODE_KINDS = (SOURCE, ROUTER, DUMMY, DESTINATION)

FAMILIES = ("Bootes2", "Bootes4", "Hex", "HexLog", "Butterfly", "Ray")
VARIANTS = ("NetA", "NetB")


class ConfigurationError(ValueError):
    """Unknown benchmark family/variant or malformed network description."""


@dataclass(frozen=True)
class CostFunction:
    """V(x) = c0 + c1 x + c2 x^2 + c3 x^3 + clog ln(1 + x)."""

    c0: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    clog: float = 0.0

    def __post_init__(self):
        for name in ("c0", "c1", "c2", "c3", "clog"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigurationError(f"cost coefficient {name}={value!r} must be finite and >= 0")

    def __call__(self, load: float) -> float:
        return eval_cost(self, load)

    @property
    def is_zero(self) -> bool:
        return not any((self.c0, self.c1, self.c2, self.c3, self.clog))

    def coefficients(self) -> tuple[float, float, float, float, float]:
        return (self.c0, self.c1, self.c2, self.c3, self.clog)

    def __str__(self) -> str:
        terms = []
        if self.c0:
            terms.append(f"{self.c0:g}")
        for coef, mono in ((self.c1, "x"), (self.c2, "x^2"), (self.c3, "x^3")):
            if coef:
                terms.append(mono if coef == 1 else f"{coef:g}{mono}")
        if self.clog:
            terms.append("ln(1+x)" if self.clog == 1 else f"{self.clog:g}ln(1+x)")
        return " + ".join(terms) if terms else "0"


ZERO_COST = CostFunction()


def eval_cost(f: CostFunction, load: float) -> float:
    """Per-packet cost of a router carrying windowed ``load``."""
    if load < 0:
        raise ValueError(f"load must be non-negative, got {load!r}")
    return f.c0 + load * (f.c1 + load * (f.c2 + load * f.c3)) + f.clog * math.log1p(load)


@dataclass(frozen=True)
class NodeSpec:
    id: str
    kind: str
    cost: CostFunction = ZERO_COST

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ConfigurationError(f"node {self.id!r}: unknown kind {self.kind!r}")
        if not self.id or any(ch.isspace() for ch in self.id):
            raise ConfigurationError(f"node id {self.id!r} must be non-empty without whitespace")


@dataclass(frozen=True)
class Commodity:
    source: str
    destination: str
    packets: int

    def __post_init__(self):
        if int(self.packets) != self.packets or self.packets < 0:
            raise ConfigurationError(f"packets per wave must be a non-negative integer, got {self.packets!r}")


@dataclass(frozen=True)
class NetworkSpec:
    """Directed layered graph plus the traffic injected every wave."""

    nodes: tuple[NodeSpec, ...]
    edges: tuple[tuple[str, str], ...]
    commodities: tuple[Commodity, ...] = ()
    name: str = ""

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("duplicate node ids")
        known = set(ids)
        for a, b in self.edges:
            if a not in known or b not in known:
                raise ConfigurationError(f"edge ({a}, {b}) references an unknown node")
        if len(set(self.edges)) != len(self.edges):
            raise ConfigurationError("duplicate edges")
        for c in self.commodities:
            if c.source not in known or c.destination not in known:
                raise ConfigurationError(f"commodity {c} references an unknown node")

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def successors(self, node_id: str) -> list[str]:
        return sorted(b for a, b in self.edges if a == node_id)

    def predecessors(self, node_id: str) -> list[str]:
        return sorted(a for a, b in self.edges if b == node_id)

    @property
    def sources(self) -> list[str]:
        return [c.source for c in self.commodities]

    @property
    def destinations(self) -> list[str]:
        seen: list[str] = []
        for c in self.commodities:
            if c.destination not in seen:
                seen.append(c.destination)
        return seen

    def with_loads(self, loads: Sequence[int]) -> "NetworkSpec":
        if len(loads) != len(self.commodities):
            raise ConfigurationError(
                f"{len(loads)} loads given for {len(self.commodities)} commodities"
            )
        flows = tuple(Commodity(c.source, c.destination, int(n)) for c, n in zip(self.commodities, loads))
        return NetworkSpec(self.nodes, self.edges, flows, self.name)


@dataclass(frozen=True)
class BenchmarkId:
    family: str
    variant: str

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown benchmark family {self.family!r}; expected one of {FAMILIES}")
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; expected NetA or NetB")

    def __str__(self):
        return f"{self.family}/{self.variant}"


@dataclass
class ValidationReport:
    violations: list[tuple[str, str]] = field(default_factory=list)
    wave_length: int | None = None
    hops: dict[tuple[str, str], int] = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {kind for kind, _ in self.violations}


# -- cost families -----------------------------------------------------------

def linear(slope: float, offset: float = 0.0) -> CostFunction:
    return CostFunction(c0=offset, c1=slope)


def logarithmic(offset: float = 0.0, scale: float = 1.0) -> CostFunction:
    return CostFunction(c0=offset, clog=scale)


# (cheap, expensive, bridge) per hex family; bridge joins the two cheap routers
_HEX_COSTS = {
    "Hex": (linear(10), linear(1, 50), linear(1, 10)),
    "HexLog": (linear(10), logarithmic(50), logarithmic()),
}

# (V1 on S1's own path, V2 on S2's path, V3 shortcut from S1 into V2)
# Bootes2's V2 is 2x^2, e.g. NetA (1, 1) costs (10 + ln 2 + 2) / 2 = 6.35 per packet.
_BOOTES_COSTS = {
    "Bootes2": (logarithmic(10), CostFunction(c2=2.0), logarithmic()),
    "Bootes4": (logarithmic(50), linear(10), logarithmic()),
}

SOURCE_COUNTS = {"Bootes2": 2, "Bootes4": 2, "Hex": 1, "HexLog": 1, "Butterfly": 3, "Ray": 2}


class _Builder:
    def __init__(self, name: str):
        self.name = name
        self.nodes: list[NodeSpec] = []
        self.edges: list[tuple[str, str]] = []
        self.flows: list[tuple[str, str]] = []

    def source(self, *ids):
        self.nodes += [NodeSpec(i, SOURCE) for i in ids]

    def dest(self, *ids):
        self.nodes += [NodeSpec(i, DESTINATION) for i in ids]

    def dummy(self, *ids):
        self.nodes += [NodeSpec(i, DUMMY) for i in ids]

    def router(self, node_id, cost):
        self.nodes.append(NodeSpec(node_id, ROUTER, cost))

    def chain(self, *ids):
        self.edges += list(zip(ids, ids[1:]))

    def build(self, loads) -> NetworkSpec:
        if len(loads) != len(self.flows):
            raise ConfigurationError(f"{self.name}: expected {len(self.flows)} source loads, got {len(loads)}")
        flows = tuple(Commodity(s, d, int(n)) for (s, d), n in zip(self.flows, loads))
        return NetworkSpec(tuple(self.nodes), tuple(self.edges), flows, self.name)


def _hex(family, net_b):
    cheap, expensive, bridge = _HEX_COSTS[family]
    b = _Builder(f"{family}/{'NetB' if net_b else 'NetA'}")
    b.source("S")
    b.dest("D")
    # left side: cheap router first; right side: expensive router first
    b.router("L_cheap", cheap)
    b.dummy("L_dummy")
    b.router("L_exp", expensive)
    b.router("R_exp", expensive)
    b.dummy("R_dummy")
    b.router("R_cheap", cheap)
    b.chain("S", "L_cheap", "L_dummy", "L_exp", "D")
    b.chain("S", "R_exp", "R_dummy", "R_cheap", "D")
    if net_b:
        b.router("bridge", bridge)
        b.chain("L_cheap", "bridge", "R_cheap")
    b.flows = [("S", "D")]
    return b


def _bootes(family, net_b):
    v1, v2, v3 = _BOOTES_COSTS[family]
    b = _Builder(f"{family}/{'NetB' if net_b else 'NetA'}")
    b.source("S1", "S2")
    b.dest("D")
    b.dummy("S1_dummy", "S2_dummy")
    b.router("V1", v1)
    b.router("V2", v2)
    b.chain("S1", "S1_dummy", "V1", "D")
    b.chain("S2", "S2_dummy", "V2", "D")
    if net_b:
        b.router("V3", v3)
        b.chain("S1", "V3", "V2")
    b.flows = [("S1", "D"), ("S2", "D")]
    return b


def _butterfly(net_b):
    v1, v2, v3 = logarithmic(50), linear(10), logarithmic()
    b = _Builder(f"Butterfly/{'NetB' if net_b else 'NetA'}")
    b.source("S1", "S2", "S3")
    b.dest("D1", "D2")
    b.dummy("S1_dummy", "S2_dummy")
    b.router("V1_left", v1)
    b.router("V2", v2)
    b.router("V1_shared", v1)
    b.router("V3", v3)
    b.chain("S1", "S1_dummy", "V1_left", "D1")
    b.chain("S2", "S2_dummy", "V2", "D1")
    b.chain("V2", "D2")
    # S2's right-hand line passes through the V1 router that S3 feeds
    b.chain("S2", "V1_shared", "V3", "D2")
    b.chain("S3", "V1_shared")
    if net_b:
        b.router("V3_link", v3)
        b.chain("S1", "V3_link", "V2")
    b.flows = [("S1", "D1"), ("S2", "D2"), ("S3", "D2")]
    return b


def _ray(net_b):
    v1, v2, v3 = logarithmic(50), linear(10), logarithmic(10)
    b = _Builder(f"Ray/{'NetB' if net_b else 'NetA'}")
    b.source("S1", "S2")
    b.dest("D1", "D2")
    # entry routers, then four conduits (bottom router, dummy midpoint, top router)
    b.router("E1", v3)
    b.router("E2", v3)
    conduits = {"A": (v1, v2), "B": (v2, v1), "C": (v2, v1), "F": (v1, v2)}
    for tag, (low, high) in conduits.items():
        b.router(f"{tag}_low", low)
        b.dummy(f"{tag}_mid")
        b.router(f"{tag}_high", high)
        b.chain(f"{tag}_low", f"{tag}_mid", f"{tag}_high")
    b.chain("S1", "E1", "A_low")
    b.chain("E1", "B_low")
    b.chain("S2", "E2", "C_low")
    b.chain("E2", "F_low")
    b.chain("A_high", "D1")
    b.chain("B_high", "D1")
    b.chain("B_high", "D2")
    b.chain("C_high", "D2")
    b.chain("C_high", "D1")
    b.chain("F_high", "D2")
    if net_b:
        # second entry per source, crossing into the far inner conduit
        b.router("E1_cross", v3)
        b.router("E2_cross", v3)
        b.chain("S1", "E1_cross", "C_low")
        b.chain("S2", "E2_cross", "B_low")
        # inner conduits can bail out into the outer top routers
        b.router("B_cross", v3)
        b.router("C_cross", v3)
        b.chain("B_low", "B_cross", "A_high")
        b.chain("C_low", "C_cross", "F_high")
    b.flows = [("S1", "D1"), ("S2", "D2")]
    return b


def build_benchmark(bench: BenchmarkId | tuple[str, str], loads: Sequence[int] | int) -> NetworkSpec:
    """Benchmark network with the given per-source packets per wave."""
    if not isinstance(bench, BenchmarkId):
        bench = BenchmarkId(*bench)
    if isinstance(loads, int):
        loads = (loads,)
    loads = tuple(loads)
    expected = SOURCE_COUNTS[bench.family]
    if len(loads) != expected:
        raise ConfigurationError(f"{bench.family} needs {expected} source loads, got {len(loads)}")
    net_b = bench.variant == "NetB"
    if bench.family in _HEX_COSTS:
        builder = _hex(bench.family, net_b)
    elif bench.family in _BOOTES_COSTS:
        builder = _bootes(bench.family, net_b)
    elif bench.family == "Butterfly":
        builder = _butterfly(net_b)
    else:
        builder = _ray(net_b)
    return builder.build(loads)


# -- graph queries -----------------------------------------------------------

def topological_order(spec: NetworkSpec) -> list[str] | None:
    """Kahn order with lexicographic tie-breaking; ``None`` if cyclic."""
    indeg = {n.id: 0 for n in spec.nodes}
    succ: dict[str, list[str]] = {n.id: [] for n in spec.nodes}
    for a, b in spec.edges:
        indeg[b] += 1
        succ[a].append(b)
    ready = sorted(i for i, d in indeg.items() if d == 0)
    order = []
    while ready:
        node = ready.pop(0)
        order.append(node)
        for nxt in sorted(succ[node]):
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
        ready.sort()
    return order if len(order) == len(spec.nodes) else None


def enumerate_paths(spec: NetworkSpec, source: str, destination: str) -> list[tuple[str, ...]]:
    """All simple directed paths from ``source`` to ``destination``, sorted."""
    succ: dict[str, list[str]] = {n.id: [] for n in spec.nodes}
    for a, b in spec.edges:
        succ[a].append(b)
    paths = []
    stack = [(source, (source,))]
    while stack:
        node, path = stack.pop()
        if node == destination:
            paths.append(path)
            continue
        for nxt in succ[node]:
            if nxt not in path:
                stack.append((nxt, path + (nxt,)))
    return sorted(paths)


def _reaches(spec: NetworkSpec, target: str) -> set[str]:
    pred: dict[str, list[str]] = {n.id: [] for n in spec.nodes}
    for a, b in spec.edges:
        pred[b].append(a)
    seen = {target}
    queue = deque([target])
    while queue:
        node = queue.popleft()
        for p in pred[node]:
            if p not in seen:
                seen.add(p)
                queue.append(p)
    return seen


def validate_network(spec: NetworkSpec) -> ValidationReport:
    """Structural checks; collects every violation instead of raising."""
    report = ValidationReport()
    kinds = {n.id: n.kind for n in spec.nodes}
    has_in = {b for _, b in spec.edges}
    has_out = {a for a, _ in spec.edges}
    for n in spec.nodes:
        if n.kind == SOURCE and n.id in has_in:
            report.violations.append(("source-inbound", n.id))
        if n.kind == DESTINATION and n.id in has_out:
            report.violations.append(("destination-outbound", n.id))
        if n.kind in (SOURCE, DUMMY, DESTINATION) and not n.cost.is_zero:
            report.violations.append(("dummy-cost", n.id))
    for c in spec.commodities:
        if kinds[c.source] != SOURCE:
            report.violations.append(("commodity-source", c.source))
        if kinds[c.destination] != DESTINATION:
            report.violations.append(("commodity-destination", c.destination))
    if topological_order(spec) is None:
        report.violations.append(("acyclicity", "graph contains a directed cycle"))
        return report

    lengths = set()
    for c in spec.commodities:
        if c.source not in _reaches(spec, c.destination):
            report.violations.append(("reachability", f"{c.source}->{c.destination}"))
            continue
        hops = {len(p) - 1 for p in enumerate_paths(spec, c.source, c.destination)}
        if len(hops) > 1:
            report.violations.append(("wave-length", f"{c.source}->{c.destination} hop counts {sorted(hops)}"))
        report.hops[(c.source, c.destination)] = max(hops)
        lengths |= hops
    if lengths and not report.violations:
        report.wave_length = max(lengths)
    return report


# -- text serialization ------------------------------------------------------

def dumps(spec: NetworkSpec) -> str:
    """Line-oriented text form; see README for the record layout."""
    lines = []
    if spec.name:
        lines.append(f"# {spec.name}")
    for n in spec.nodes:
        coefs = " ".join(repr(float(c)) for c in n.cost.coefficients())
        lines.append(f"node {n.id} {n.kind} {coefs}")
    for a, b in spec.edges:
        lines.append(f"edge {a} {b}")
    for c in spec.commodities:
        lines.append(f"flow {c.source} {c.destination} {c.packets}")
    return "\n".join(lines) + "\n"


def loads_text(text: str, name: str = "") -> NetworkSpec:
    nodes, edges, flows = [], [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            name = name or line[1:].strip()
            continue
        parts = line.split()
        try:
            if parts[0] == "node" and len(parts) == 8:
                cost = CostFunction(*(float(v) for v in parts[3:]))
                nodes.append(NodeSpec(parts[1], parts[2], cost))
            elif parts[0] == "edge" and len(parts) == 3:
                edges.append((parts[1], parts[2]))
            elif parts[0] == "flow" and len(parts) == 4:
                flows.append(Commodity(parts[1], parts[2], int(parts[3])))
            else:
                raise ConfigurationError("unrecognised record")
        except (ValueError, ConfigurationError) as exc:
            raise ConfigurationError(f"line {lineno}: {raw!r}: {exc}") from None
    return NetworkSpec(tuple(nodes), tuple(edges), tuple(flows), name)


def insert_dummies(spec: NetworkSpec, edges: Iterable[tuple[str, str]] | None = None) -> NetworkSpec:
    """Split each listed edge (default: all edges) with a zero-cost dummy node.

    Preserves equal hop counts only when every path is split the same number
    of times; the default of splitting all edges is always safe.
    """
    targets = set(spec.edges if edges is None else edges)
    nodes = list(spec.nodes)
    new_edges = []
    for a, b in spec.edges:
        if (a, b) in targets:
            mid = f"{a}__{b}"
            nodes.append(NodeSpec(mid, DUMMY))
            new_edges += [(a, mid), (mid, b)]
        else:
            new_edges.append((a, b))
    return NetworkSpec(tuple(nodes), tuple(new_edges), spec.commodities, spec.name)
