"""Wave-granular network simulation.

Traffic is injected at the sources at the start of each wave and is routed
all the way to its destination within that wave, so one wave is the unit of
time here.  Every (router, destination) pair sends all of its traffic for the
wave down a single next hop.  Windowed loads are averages of per-wave
throughput over the last ``window_waves`` waves *including* the current one,
so they are in packets per wave.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .topology import DESTINATION, NetworkSpec, ValidationReport, topological_order, validate_network

GLOBAL_PER_PACKET = "global-per-packet"
SUM_OVER_SOURCES = "sum-over-sources"
METRIC_MODES = (GLOBAL_PER_PACKET, SUM_OVER_SOURCES)

TRACE_HEADER = ("wave", "router", "dest", "throughput", "windowed_load", "router_cost")

Pair = tuple[str, str]
DecisionMap = dict[Pair, str]


class RoutingError(RuntimeError):
    """A branching node received traffic but has no routing decision."""


@dataclass(frozen=True)
class SimConfig:
    window_waves: int = 100
    warmup_waves: int = 300
    measure_waves: int = 800
    seed: int = 0
    metric_mode: str = GLOBAL_PER_PACKET

    def __post_init__(self):
        if self.window_waves < 1:
            raise ValueError("window_waves must be >= 1")
        if self.measure_waves < 1:
            raise ValueError("measure_waves must be >= 1")
        if self.warmup_waves < 0:
            raise ValueError("warmup_waves must be >= 0")
        if self.metric_mode not in METRIC_MODES:
            raise ValueError(f"metric_mode must be one of {METRIC_MODES}")


class Network:
    """Index-based compiled form of a validated :class:`NetworkSpec`.

    Pairs ``(router, destination)`` are numbered in topological order of the
    router so one forward sweep propagates a whole wave.
    """

    def __init__(self, spec: NetworkSpec):
        report = validate_network(spec)
        if not report.valid:
            raise ValueError(f"invalid network {spec.name!r}: {report.violations}")
        self.spec = spec
        self.validation: ValidationReport = report
        self.wave_length = report.wave_length
        self.ids: tuple[str, ...] = tuple(topological_order(spec))
        self.index = {node: i for i, node in enumerate(self.ids)}
        n = len(self.ids)
        coef = np.zeros((5, n))
        for node in spec.nodes:
            coef[:, self.index[node.id]] = node.cost.coefficients()
        self._c0, self._c1, self._c2, self._c3, self._clog = coef
        self.kinds = tuple(spec.node(i).kind for i in self.ids)

        succ: list[list[int]] = [[] for _ in range(n)]
        for a, b in spec.edges:
            succ[self.index[a]].append(self.index[b])
        for lst in succ:
            lst.sort(key=lambda j: self.ids[j])
        self.succ = tuple(tuple(s) for s in succ)
        self.edges: tuple[tuple[int, int], ...] = tuple(
            (a, b) for a in range(n) for b in self.succ[a]
        )
        self.edge_index = {e: k for k, e in enumerate(self.edges)}
        # out-links of each node, in the fixed (sorted) order used for learner inputs
        self.out_edges = tuple(tuple(self.edge_index[(a, b)] for b in self.succ[a]) for a in range(n))

        self.destinations: tuple[int, ...] = tuple(self.index[d] for d in spec.destinations)
        self.dest_pos = {d: k for k, d in enumerate(self.destinations)}
        reach = {d: self._reaching(d) for d in self.destinations}

        pairs = []
        for r in range(n):
            if self.kinds[r] == DESTINATION:
                continue
            for d in self.destinations:
                if r in reach[d]:
                    pairs.append((r, d))
        self.pairs: tuple[tuple[int, int], ...] = tuple(pairs)
        self.pair_index = {p: k for k, p in enumerate(self.pairs)}
        self.K = len(self.pairs)
        self.pair_router = np.array([r for r, _ in self.pairs], dtype=np.intp)
        self.pair_dest = np.array([self.dest_pos[d] for _, d in self.pairs], dtype=np.intp)

        options, next_pair, slots, slot_edge = [], [], [], []
        for k, (r, d) in enumerate(self.pairs):
            opts = tuple(j for j in self.succ[r] if j == d or j in reach[d])
            options.append(opts)
            next_pair.append(tuple(-1 if j == d else self.pair_index[(j, d)] for j in opts))
            slots.append(tuple(range(len(slot_edge), len(slot_edge) + len(opts))))
            slot_edge.extend(self.edge_index[(r, j)] for j in opts)
        self.options = tuple(options)
        self.next_pair = tuple(next_pair)
        self.slots = tuple(slots)
        self.slot_edge = np.array(slot_edge, dtype=np.intp)
        self.n_slots = len(slot_edge)
        self.branching: tuple[int, ...] = tuple(k for k in range(self.K) if len(self.options[k]) > 1)
        self.branch_pos = {k: i for i, k in enumerate(self.branching)}
        self.commodities = tuple(
            (self.pair_index[(self.index[c.source], self.index[c.destination])], c.packets, c.source)
            for c in spec.commodities
        )

    def _reaching(self, d: int) -> set[int]:
        seen = {d}
        stack = [d]
        pred: dict[int, list[int]] = {}
        for a in range(len(self.ids)):
            for b in self.succ[a]:
                pred.setdefault(b, []).append(a)
        while stack:
            node = stack.pop()
            for p in pred.get(node, ()):
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen

    # -- conversions ---------------------------------------------------------
    def pair_of(self, node: Pair) -> int:
        r, d = node
        try:
            return self.pair_index[(self.index[r], self.index[d])]
        except KeyError:
            raise KeyError(f"{node} is not a (router, destination) node of {self.spec.name!r}") from None

    def pair_name(self, k: int) -> Pair:
        r, d = self.pairs[k]
        return (self.ids[r], self.ids[d])

    def option_names(self, k: int) -> tuple[str, ...]:
        return tuple(self.ids[j] for j in self.options[k])

    def branching_names(self) -> list[Pair]:
        return [self.pair_name(k) for k in self.branching]

    # -- costs ---------------------------------------------------------------
    def node_costs(self, loads: np.ndarray) -> np.ndarray:
        """Vector of V_r(load_r) for every node."""
        if np.any(loads < 0):
            raise ValueError("negative windowed load")
        z = loads
        return self._c0 + z * (self._c1 + z * (self._c2 + z * self._c3)) + self._clog * np.log1p(z)

    def router_totals(self, per_pair: np.ndarray, dest_mask: np.ndarray | None = None) -> np.ndarray:
        """Sum a per-pair vector into per-node totals, optionally over a destination subset."""
        w = per_pair if dest_mask is None else per_pair * dest_mask[self.pair_dest]
        return np.bincount(self.pair_router, weights=w, minlength=len(self.ids))

    def follow(self, k: int, choice: Mapping[int, int]) -> list[int]:
        """Pairs visited by traffic entering pair ``k``, given option positions per pair."""
        chain = []
        while k >= 0:
            chain.append(k)
            nxt = self.next_pair[k]
            if len(nxt) == 1:
                k = nxt[0]
            else:
                pos = choice.get(k)
                if pos is None:
                    raise RoutingError(f"no routing decision for {self.pair_name(k)}")
                k = nxt[pos]
        return chain


@dataclass(frozen=True)
class WaveRecord:
    """Per-wave throughput, as stored in the window buffer."""

    x: np.ndarray  # per pair
    split: np.ndarray  # per (pair, option) slot
    # (branch position, pairs visited, packets) for each branching pair with traffic
    own: tuple[tuple[int, tuple[int, ...], float], ...]


@dataclass
class WaveState:
    """Windowed state after ``wave_index`` completed waves."""

    net: Network
    window_waves: int
    wave_index: int = 0
    window: deque = field(default_factory=deque)
    x: np.ndarray | None = None
    split_last: np.ndarray | None = None
    x_sum: np.ndarray | None = None
    split_sum: np.ndarray | None = None
    own_sum: np.ndarray | None = None

    def __post_init__(self):
        net = self.net
        if self.x is None:
            self.x = np.zeros(net.K)
            self.split_last = np.zeros(net.n_slots)
            self.x_sum = np.zeros(net.K)
            self.split_sum = np.zeros(net.n_slots)
            self.own_sum = np.zeros((len(net.branching), net.K))
        n = len(self.window)
        scale = 1.0 / n if n else 0.0
        self.X = self.x_sum * scale
        self.Z = net.router_totals(self.X)
        self.split_load = self.split_sum * scale
        self.link_load = np.bincount(net.slot_edge, weights=self.split_load, minlength=len(net.edges))

    @classmethod
    def initial(cls, net: Network, window_waves: int) -> "WaveState":
        return cls(net, window_waves, window=deque(maxlen=window_waves))

    @property
    def filled(self) -> int:
        return len(self.window)

    def own_load(self, k: int) -> np.ndarray:
        """Windowed contribution of branching pair ``k``'s traffic to every X."""
        n = len(self.window)
        if not n:
            return np.zeros(self.net.K)
        return self.own_sum[self.net.branch_pos[k]] / n

    def own_split(self, k: int) -> np.ndarray:
        """Windowed traffic of pair ``k`` on each of its options."""
        n = len(self.window)
        s = self.net.slots[k]
        return self.split_sum[s[0]: s[-1] + 1] / n if n else np.zeros(len(s))

    # dictionary views keyed by node ids
    @property
    def throughput(self) -> dict[Pair, float]:
        return {self.net.pair_name(k): float(v) for k, v in enumerate(self.x)}

    @property
    def windowed_load(self) -> dict[Pair, float]:
        return {self.net.pair_name(k): float(v) for k, v in enumerate(self.X)}

    @property
    def router_load(self) -> dict[str, float]:
        return {self.net.ids[r]: float(self.Z[r]) for r in range(len(self.net.ids))}

    def recompute_windowed(self) -> np.ndarray:
        """X straight from the buffer (reference for the incremental sums)."""
        if not self.window:
            return np.zeros(self.net.K)
        return np.mean([rec.x for rec in self.window], axis=0)


@dataclass(frozen=True)
class WaveMetrics:
    wave: int
    world_reward: float
    per_source_cost: dict[str, float]
    packets: int
    routes: dict[str, tuple[str, ...]] = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class ExperimentCell:
    mean: float
    spread: float
    waves: int
    mode: str


def route_wave(net: Network, choice: Mapping[int, int]) -> tuple[np.ndarray, np.ndarray, dict[int, int]]:
    """Propagate one wave of injected traffic; returns (x, split, chosen option per pair)."""
    inflow = [0.0] * net.K
    for k, packets, _ in net.commodities:
        inflow[k] += packets
    x = [0.0] * net.K
    split = [0.0] * net.n_slots
    used: dict[int, int] = {}
    for k in range(net.K):
        amount = inflow[k]
        if amount <= 0:
            continue
        if len(net.options[k]) == 1:
            pos = 0
        else:
            pos = choice.get(k)
            if pos is None:
                raise RoutingError(f"no routing decision for branching node {net.pair_name(k)}")
            used[k] = pos
        x[k] = amount
        split[net.slots[k][pos]] = amount
        nxt = net.next_pair[k][pos]
        if nxt >= 0:
            inflow[nxt] += amount
    x = np.array(x)
    split = np.array(split)
    return x, split, used


def decisions_to_choice(net: Network, decisions: Mapping[Pair, str]) -> dict[int, int]:
    choice = {}
    for (r, d), nxt in decisions.items():
        k = net.pair_of((r, d))
        try:
            choice[k] = net.options[k].index(net.index[nxt])
        except (ValueError, KeyError):
            raise RoutingError(f"{nxt!r} is not a legal next hop for {(r, d)}") from None
    return choice


def choice_to_decisions(net: Network, choice: Mapping[int, int]) -> DecisionMap:
    return {net.pair_name(k): net.ids[net.options[k][pos]] for k, pos in choice.items()}


def advance(state: WaveState, choice: Mapping[int, int]) -> tuple[WaveState, WaveMetrics]:
    """Index-level form of :func:`run_wave`."""
    net = state.net
    x, split, used = route_wave(net, choice)

    own = []
    chains: dict[int, tuple[int, ...]] = {}
    xl = x.tolist()
    for k in range(net.K - 1, -1, -1):
        if xl[k] <= 0:
            continue
        nxt = net.next_pair[k][used.get(k, 0)]
        chains[k] = (k,) + chains[nxt] if nxt >= 0 else (k,)
        if k in net.branch_pos:
            own.append((net.branch_pos[k], chains[k], xl[k]))
    record = WaveRecord(x, split, tuple(own))

    window = deque(state.window, maxlen=state.window_waves)
    x_sum = state.x_sum + x
    split_sum = state.split_sum + split
    own_sum = state.own_sum.copy()
    for b, chain, amount in record.own:
        own_sum[b, list(chain)] += amount
    if len(window) == state.window_waves:
        old = window[0]
        x_sum -= old.x
        split_sum -= old.split
        for b, chain, amount in old.own:
            own_sum[b, list(chain)] -= amount
    window.append(record)
    new = WaveState(net, state.window_waves, state.wave_index + 1, window, x, split, x_sum, split_sum, own_sum)

    costs_arr = net.node_costs(new.Z)
    world = float(np.dot(net.router_totals(x), costs_arr))
    costs = costs_arr.tolist()
    per_source = {}
    routes = {}
    packets = 0
    for k, n_packets, src in net.commodities:
        if n_packets <= 0:
            continue
        packets += n_packets
        chain = chains[k]
        per_source[src] = math.fsum(costs[net.pairs[j][0]] for j in chain)
        routes[src] = tuple(net.ids[net.pairs[j][0]] for j in chain) + (net.ids[net.pairs[k][1]],)
    return new, WaveMetrics(new.wave_index, world, per_source, packets, routes)


def run_wave(spec_or_net: NetworkSpec | Network, state: WaveState, decisions: Mapping[Pair, str]):
    """Route one wave with ``decisions`` and return ``(next_state, metrics)``."""
    net = spec_or_net if isinstance(spec_or_net, Network) else Network(spec_or_net)
    if state.net is not net and state.net.spec != net.spec:
        raise ValueError("state belongs to a different network")
    return advance(state, decisions_to_choice(state.net, decisions))


def aggregate_metrics(metrics: Sequence[WaveMetrics], mode: str = GLOBAL_PER_PACKET) -> ExperimentCell:
    """Collapse measured waves into one table cell."""
    if not metrics:
        raise ValueError("no measured waves to aggregate")
    if mode == GLOBAL_PER_PACKET:
        total_packets = sum(m.packets for m in metrics)
        if total_packets == 0:
            raise ValueError("no packets injected during the measured waves")
        mean = sum(m.world_reward for m in metrics) / total_packets
        per_wave = [m.world_reward / m.packets for m in metrics if m.packets]
    elif mode == SUM_OVER_SOURCES:
        per_wave = [sum(m.per_source_cost.values()) for m in metrics]
        mean = math.fsum(per_wave) / len(per_wave)
    else:
        raise ValueError(f"unknown metric mode {mode!r}")
    spread = float(np.std(per_wave)) if len(per_wave) > 1 else 0.0
    return ExperimentCell(float(mean), spread, len(metrics), mode)


class TraceWriter:
    """Per-wave CSV trace, one row per (router, destination) node."""

    def __init__(self, fh):
        self._w = csv.writer(fh)
        self._w.writerow(TRACE_HEADER)

    def write(self, state: WaveState) -> None:
        net = state.net
        costs = net.node_costs(state.Z)
        for k, (r, d) in enumerate(net.pairs):
            self._w.writerow((state.wave_index, net.ids[r], net.ids[d], repr(float(state.x[k])),
                              repr(float(state.X[k])), repr(float(costs[r]))))


def read_trace(lines: Iterable[str]) -> list[dict]:
    rows = []
    for row in csv.DictReader(lines):
        rows.append({
            "wave": int(row["wave"]), "router": row["router"], "dest": row["dest"],
            "throughput": float(row["throughput"]), "windowed_load": float(row["windowed_load"]),
            "router_cost": float(row["router_cost"]),
        })
    return rows
