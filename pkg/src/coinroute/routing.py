"""Routing policies: ideal shortest path (ISPA), full-knowledge COIN (FK) and
memory-based COIN (MB), plus the run pipeline that drives them.

Every run starts with ``bootstrap_waves`` of ISPA routing.  For MB this is
the phase that seeds the nearest-neighbour training sets; for ISPA and FK
it is simply part of the warm-up.  Sharing the lead-in keeps an MB run with
steering 1.0 decision-for-decision identical to an FK run with the same seed.
"""
from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .engine import (ExperimentCell, Network, Pair, RoutingError, SimConfig, TraceWriter, WaveMetrics,
                     WaveState, advance, aggregate_metrics, choice_to_decisions, decisions_to_choice)
from .topology import NetworkSpec, enumerate_paths
from .wlr import WaveSnapshot, hypothetical_snapshot, wave_wlr, world_reward

ISPA, FK, MB = "ISPA", "FK", "MB"
POLICIES = (ISPA, FK, MB)

DECISION_HEADER = ("wave", "router", "dest", "policy", "chosen", "estimate")

TIE_RTOL = 1e-9


class EmptyStoreError(RuntimeError):
    """The memory-based learner was asked to decide with no training data."""


@dataclass(frozen=True)
class PolicyConfig:
    policy: str = ISPA
    steering: float = 0.5
    bootstrap_waves: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if not 0.0 <= self.steering <= 1.0:
            raise ValueError("steering must lie in [0, 1]")
        if self.bootstrap_waves < 0 or (self.policy == MB and self.bootstrap_waves < 1):
            raise ValueError("MB needs bootstrap_waves >= 1")


@dataclass(frozen=True)
class TrainingExample:
    input: tuple[float, ...]
    output: float


class TrainingStore:
    """Append-only per-node training sets with a 1-nearest-neighbour lookup."""

    def __init__(self):
        self._inputs: dict[Pair, np.ndarray] = {}
        self._outputs: dict[Pair, np.ndarray] = {}
        self._size: dict[Pair, int] = {}

    def add(self, node: Pair, inputs: Sequence[float], output: float) -> None:
        vec = np.asarray(inputs, dtype=float)
        if not np.all(np.isfinite(vec)) or not np.isfinite(output):
            raise ValueError("training examples must be finite")
        n = self._size.get(node, 0)
        if n == 0:
            self._inputs[node] = np.empty((16, vec.size))
            self._outputs[node] = np.empty(16)
        elif vec.size != self._inputs[node].shape[1]:
            raise ValueError(f"input length {vec.size} differs from earlier examples for {node}")
        elif n == len(self._outputs[node]):
            self._inputs[node] = np.concatenate([self._inputs[node], np.empty_like(self._inputs[node])])
            self._outputs[node] = np.concatenate([self._outputs[node], np.empty_like(self._outputs[node])])
        self._inputs[node][n] = vec
        self._outputs[node][n] = output
        self._size[node] = n + 1

    def __len__(self) -> int:
        return sum(self._size.values())

    def count(self, node: Pair) -> int:
        return self._size.get(node, 0)

    def nodes(self) -> list[Pair]:
        return sorted(self._size)

    def examples(self, node: Pair) -> list[TrainingExample]:
        n = self.count(node)
        return [TrainingExample(tuple(float(v) for v in self._inputs[node][i]), float(self._outputs[node][i]))
                for i in range(n)]

    def nearest(self, node: Pair, query: Sequence[float]) -> tuple[int, float]:
        """Index and output of the closest stored input (earliest wins exact ties)."""
        n = self.count(node)
        if n == 0:
            raise EmptyStoreError(f"no training data for {node}; run bootstrap first")
        diff = self._inputs[node][:n] - np.asarray(query, dtype=float)
        i = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
        return i, float(self._outputs[node][i])


@dataclass(frozen=True)
class DecisionRecord:
    wave: int
    router: str
    dest: str
    policy: str
    chosen: str
    estimate: float


def _pick_min(values: Sequence[float], rng: random.Random) -> int:
    best = min(values)
    tol = TIE_RTOL * max(1.0, abs(best))
    ties = [i for i, v in enumerate(values) if v <= best + tol]
    return ties[0] if len(ties) == 1 else rng.choice(ties)


def argmin_set(values: Sequence[float]) -> frozenset[int]:
    best = min(values)
    tol = TIE_RTOL * max(1.0, abs(best))
    return frozenset(i for i, v in enumerate(values) if v <= best + tol)


# -- ISPA ----------------------------------------------------------------------

def ispa_costs(net: Network, state: WaveState) -> dict[int, list[float]]:
    """Cheapest frozen-load cost from every node to each destination (node's own cost included)."""
    costs = net.node_costs(state.Z).tolist()
    inf = float("inf")
    out = {}
    for d in net.destinations:
        togo = [inf] * len(net.ids)
        togo[d] = 0.0
        for r in range(len(net.ids) - 1, -1, -1):
            succ = net.succ[r]
            if r == d or not succ:
                continue
            best = min([togo[j] for j in succ])
            if best < inf:
                togo[r] = costs[r] + best
        out[d] = togo
    return out


def ispa_choice(net: Network, state: WaveState, k: int, rng: random.Random,
                togo: Mapping[int, list[float]] | None = None) -> tuple[int, float]:
    """Option position and path cost of the frozen-load shortest path from pair ``k``."""
    if togo is None:
        togo = ispa_costs(net, state)
    d = net.pairs[k][1]
    values = [togo[d][j] for j in net.options[k]]
    if not values:
        raise RoutingError(f"no path from {net.pair_name(k)}")
    pos = _pick_min(values, rng)
    return pos, values[pos]


def ispa_decide(spec_or_net, state: WaveState, node: Pair, rng: random.Random | None = None) -> str:
    net = state.net
    pos, _ = ispa_choice(net, state, net.pair_of(node), rng or random.Random(0))
    return net.ids[net.options[net.pair_of(node)][pos]]


def brute_force_path_cost(net: Network, state: WaveState, node: Pair) -> float:
    """Minimum over every enumerated path of the frozen-load cost after the first node."""
    costs = net.node_costs(state.Z)
    paths = enumerate_paths(net.spec, *node)
    if not paths:
        raise RoutingError(f"no path from {node[0]} to {node[1]}")
    return min(sum(costs[net.index[n]] for n in p[1:]) for p in paths)


# -- FK COIN -------------------------------------------------------------------

def fk_values(net: Network, state: WaveState, k: int, choice: Mapping[int, int], amount: float) -> list[float]:
    d = net.pairs[k][1]
    return [wave_wlr(hypothetical_snapshot(state, k, pos, choice, amount), net.ids[d])
            for pos in range(len(net.options[k]))]


def fk_choice(net: Network, state: WaveState, k: int, choice: Mapping[int, int], amount: float,
              rng: random.Random) -> tuple[int, float]:
    values = fk_values(net, state, k, choice, amount)
    pos = _pick_min(values, rng)
    return pos, values[pos]


def fk_decide(spec_or_net, state: WaveState, node: Pair, decisions: Mapping[Pair, str] | None = None,
              amount: float | None = None, rng: random.Random | None = None) -> str:
    from .wlr import expected_amount

    net = state.net
    k = net.pair_of(node)
    choice = decisions_to_choice(net, decisions or {})
    if amount is None:
        amount = expected_amount(state, k)
    pos, _ = fk_choice(net, state, k, _complete(net, state, choice), amount, rng or random.Random(0))
    return net.ids[net.options[k][pos]]


def factoredness_sets(net: Network, state: WaveState, k: int, choice: Mapping[int, int],
                      amount: float) -> tuple[frozenset[int], frozenset[int]]:
    """Best-candidate sets by WLR and by hypothetical world reward."""
    snaps = [hypothetical_snapshot(state, k, pos, choice, amount) for pos in range(len(net.options[k]))]
    d = net.ids[net.pairs[k][1]]
    return argmin_set([wave_wlr(s, d) for s in snaps]), argmin_set([world_reward(s) for s in snaps])


# -- MB COIN -------------------------------------------------------------------

def link_query(net: Network, state: WaveState, k: int, pos: int, amount: float) -> np.ndarray:
    """Windowed loads on the router's out-links one wave ahead if pair ``k`` picks ``pos``.

    Traffic of the router's other destinations is assumed to repeat last
    wave's split; the oldest wave drops out if the window is full.
    """
    r = net.pairs[k][0]
    edges = list(net.out_edges[r])
    n = state.filled
    sums = state.link_load[edges] * n
    new = np.zeros(len(edges))
    for j in range(net.K):
        if net.pairs[j][0] != r or j == k:
            continue
        for s, slot in enumerate(net.slots[j]):
            new[edges.index(net.slot_edge[slot])] += state.split_last[slot]
    new[edges.index(net.slot_edge[net.slots[k][pos]])] += amount
    if n == state.window_waves:
        old = state.window[0]
        dropped = np.bincount(net.slot_edge, weights=old.split, minlength=len(net.edges))[edges]
        return (sums - dropped + new) / n
    return (sums + new) / (n + 1)


def router_link_loads(net: Network, state: WaveState, k: int) -> np.ndarray:
    return state.link_load[list(net.out_edges[net.pairs[k][0]])]


def mb_choice(net: Network, state: WaveState, store: TrainingStore, k: int, choice: Mapping[int, int],
              amount: float, steering: float, rng: random.Random, steer_rng: random.Random
              ) -> tuple[int, float, str]:
    """Returns (option position, estimate, label) where label says who decided."""
    if steer_rng.random() < steering:
        pos, value = fk_choice(net, state, k, choice, amount, rng)
        return pos, value, "MB/FK"
    node = net.pair_name(k)
    if store.count(node) == 0:
        raise EmptyStoreError(f"no training data for {node}; run bootstrap first")
    estimates = [store.nearest(node, link_query(net, state, k, pos, amount))[1]
                 for pos in range(len(net.options[k]))]
    pos = _pick_min(estimates, rng)
    return pos, estimates[pos], MB


def mb_decide(spec_or_net, state: WaveState, store: TrainingStore, node: Pair, steering: float,
              rng: random.Random, decisions: Mapping[Pair, str] | None = None, amount: float | None = None,
              steer_rng: random.Random | None = None) -> str:
    from .wlr import expected_amount

    net = state.net
    k = net.pair_of(node)
    if amount is None:
        amount = expected_amount(state, k)
    choice = _complete(net, state, decisions_to_choice(net, decisions or {}))
    pos, _, _ = mb_choice(net, state, store, k, choice, amount, steering, rng, steer_rng or rng)
    return net.ids[net.options[k][pos]]


def _complete(net: Network, state: WaveState, choice: Mapping[int, int]) -> dict[int, int]:
    """Fill undecided branching pairs with a deterministic ISPA choice."""
    full = dict(choice)
    togo = None
    for k in net.branching:
        if k not in full:
            togo = togo if togo is not None else ispa_costs(net, state)
            full[k] = ispa_choice(net, state, k, random.Random(0), togo)[0]
    return full


# -- run pipeline --------------------------------------------------------------

@dataclass
class RunResult:
    cell: ExperimentCell
    metrics: list[WaveMetrics]
    log: list[DecisionRecord]
    store: TrainingStore
    state: WaveState
    bootstrap_size: int = 0
    ispa_violations: list[tuple] = field(default_factory=list)
    factored_checks: int = 0
    factored_violations: list[tuple] = field(default_factory=list)


def _child_seeds(seed: int) -> tuple[int, int]:
    a, b = np.random.SeedSequence(seed).generate_state(4, dtype=np.uint32).reshape(2, 2)
    return int(a[0]) << 32 | int(a[1]), int(b[0]) << 32 | int(b[1])


class Simulation:
    """One seeded run of a policy on a network."""

    def __init__(self, spec: NetworkSpec | Network, sim: SimConfig, pol: PolicyConfig, *,
                 check_ispa: bool = False, check_factored: bool = False, trace: TraceWriter | None = None):
        self.net = spec if isinstance(spec, Network) else Network(spec)
        self.sim = sim
        self.pol = pol
        self.state = WaveState.initial(self.net, sim.window_waves)
        tie_seed, steer_seed = _child_seeds(pol.seed)
        self.rng = random.Random(tie_seed)
        self.steer_rng = random.Random(steer_seed)
        self.choice: dict[int, int] = {}
        self.store = TrainingStore()
        self.log: list[DecisionRecord] = []
        self.check_ispa = check_ispa
        self.check_factored = check_factored
        self.trace = trace
        self.ispa_violations: list[tuple] = []
        self.factored_checks = 0
        self.factored_violations: list[tuple] = []
        self._paths: dict[int, list[np.ndarray]] = {}

    def _oracle_ispa(self, k: int, estimate: float) -> None:
        if k not in self._paths:
            self._paths[k] = [np.array([self.net.index[n] for n in p[1:]], dtype=np.intp)
                              for p in enumerate_paths(self.net.spec, *self.net.pair_name(k))]
        costs = self.net.node_costs(self.state.Z)
        best = min(float(costs[p].sum()) for p in self._paths[k])
        if abs(best - estimate) > 1e-9 * max(1.0, abs(best)):
            self.ispa_violations.append((self.state.wave_index, self.net.pair_name(k), estimate, best))

    def _decide(self, k: int, amount: float, policy: str) -> tuple[int, float, str]:
        net, state = self.net, self.state
        if policy == ISPA:
            if self._togo is None:
                self._togo = ispa_costs(net, state)
            pos, value = ispa_choice(net, state, k, self.rng, self._togo)
            if self.check_ispa:
                self._oracle_ispa(k, value)
            return pos, value, ISPA
        if policy == FK:
            pos, value = fk_choice(net, state, k, self.choice, amount, self.rng)
            label = FK
        else:
            try:
                pos, value, label = mb_choice(net, state, self.store, k, self.choice, amount,
                                              self.pol.steering, self.rng, self.steer_rng)
            except EmptyStoreError:
                pos, value = fk_choice(net, state, k, self.choice, amount, self.rng)
                label = "MB/FK-cold"
        if self.check_factored and label != MB:
            self.factored_checks += 1
            by_wlr, by_world = factoredness_sets(net, state, k, self.choice, amount)
            if by_wlr != by_world:
                self.factored_violations.append((state.wave_index, net.pair_name(k), by_wlr, by_world))
        return pos, value, label

    def step(self, policy: str, record: bool = False) -> WaveMetrics:
        """Plan decisions in topological order, route the wave, optionally store examples."""
        net = self.net
        self._togo = None
        if not self.choice and net.branching:
            self.choice = _complete(net, self.state, {})
        inflow = np.zeros(net.K)
        for k, packets, _ in net.commodities:
            inflow[k] += packets
        made = []
        wave = self.state.wave_index + 1
        for k in range(net.K):
            amount = inflow[k]
            if amount <= 0:
                continue
            pos = 0
            if len(net.options[k]) > 1:
                pos, value, label = self._decide(k, float(amount), policy)
                self.choice[k] = pos
                r, d = net.pair_name(k)
                self.log.append(DecisionRecord(wave, r, d, label, net.ids[net.options[k][pos]], value))
                made.append(k)
            nxt = net.next_pair[k][pos]
            if nxt >= 0:
                inflow[nxt] += amount
        self.state, metrics = advance(self.state, self.choice)
        if record and made:
            snap = WaveSnapshot(net, self.state.X, self.state.X)
            for k in made:
                d = net.ids[net.pairs[k][1]]
                self.store.add(net.pair_name(k), router_link_loads(net, self.state, k), wave_wlr(snap, d))
        if self.trace is not None:
            self.trace.write(self.state)
        return metrics

    def run(self) -> RunResult:
        pol, sim = self.pol, self.sim
        for _ in range(pol.bootstrap_waves):
            self.step(ISPA, record=pol.policy == MB)
        boot = len(self.store)
        measured = []
        for i in range(sim.warmup_waves + sim.measure_waves):
            m = self.step(pol.policy, record=pol.policy == MB)
            if i >= sim.warmup_waves:
                measured.append(m)
        cell = aggregate_metrics(measured, sim.metric_mode)
        return RunResult(cell, measured, self.log, self.store, self.state, boot, self.ispa_violations,
                         self.factored_checks, self.factored_violations)


def bootstrap(spec: NetworkSpec | Network, sim: SimConfig, pol: PolicyConfig) -> TrainingStore:
    """Training sets gathered while ISPA routes for ``pol.bootstrap_waves`` waves."""
    if pol.bootstrap_waves < 1:
        raise ValueError("bootstrap_waves must be >= 1")
    runner = Simulation(spec, sim, pol)
    for _ in range(pol.bootstrap_waves):
        runner.step(ISPA, record=True)
    return runner.store


def run_policy(spec: NetworkSpec | Network, sim: SimConfig, pol: PolicyConfig) -> ExperimentCell:
    return Simulation(spec, sim, pol).run().cell


def write_decision_log(log: Sequence[DecisionRecord], fh) -> None:
    w = csv.writer(fh)
    w.writerow(DECISION_HEADER)
    for rec in log:
        w.writerow((rec.wave, rec.router, rec.dest, rec.policy, rec.chosen, repr(float(rec.estimate))))


def read_decision_log(lines) -> list[DecisionRecord]:
    return [DecisionRecord(int(r["wave"]), r["router"], r["dest"], r["policy"], r["chosen"], float(r["estimate"]))
            for r in csv.DictReader(lines)]
