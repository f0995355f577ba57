"""Wonderful Life Reward for (router, destination) nodes.

All quantities are in cost units: a world reward is the total cost accrued
in a wave, and a node's WLR is that total minus the total with every
component bound for the node's destination clamped to zero.  Lower is
better, so "maximising WLR" in utility terms means picking the candidate
with the smallest value returned here.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .engine import Network, Pair, RoutingError, WaveState


@dataclass(frozen=True)
class WaveSnapshot:
    """Per-pair wave throughput ``x`` and windowed load ``X`` on a network."""

    net: Network
    x: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        if self.x.shape != (self.net.K,) or self.X.shape != (self.net.K,):
            raise ValueError("snapshot vectors must have one entry per (router, destination) node")

    @classmethod
    def from_state(cls, state: WaveState) -> "WaveSnapshot":
        return cls(state.net, state.x.copy(), state.X.copy())


def _dest_position(net: Network, d) -> int:
    if isinstance(d, (int, np.integer)):
        if not 0 <= d < len(net.destinations):
            raise KeyError(f"destination position {d} out of range")
        return int(d)
    try:
        return net.dest_pos[net.index[d]]
    except KeyError:
        raise KeyError(f"{d!r} is not a destination of {net.spec.name!r}") from None


def world_reward(snap: WaveSnapshot) -> float:
    """Sum over routers of wave throughput times V(windowed load)."""
    net = snap.net
    costs = net.node_costs(net.router_totals(snap.X))
    return float(np.dot(net.router_totals(snap.x), costs))


def clamp_destination(snap: WaveSnapshot, d) -> WaveSnapshot:
    """Counterfactual snapshot with every component bound for ``d`` set to zero."""
    pos = _dest_position(snap.net, d)
    keep = snap.net.pair_dest != pos
    return WaveSnapshot(snap.net, np.where(keep, snap.x, 0.0), np.where(keep, snap.X, 0.0))


def wave_wlr(snap: WaveSnapshot, node) -> float:
    """WLR of ``node`` (a ``(router, dest)`` pair or just a destination).

    Evaluated from the expanded two-term form rather than by clamping: per
    router, full-throughput cost minus the cost of the other destinations'
    traffic at the load those destinations alone would produce.
    """
    net = snap.net
    d = node[1] if isinstance(node, tuple) else node
    pos = _dest_position(net, d)
    others = np.ones(len(net.destinations))
    others[pos] = 0.0
    n_all = net.router_totals(snap.x)
    z_all = net.router_totals(snap.X)
    n_rest = net.router_totals(snap.x, others)
    z_rest = net.router_totals(snap.X, others)
    return float(np.sum(n_all * net.node_costs(z_all) - n_rest * net.node_costs(z_rest)))


def candidate_chain(net: Network, k: int, pos: int, choice: Mapping[int, int]) -> list[int]:
    """Pairs visited when pair ``k`` sends to its option ``pos``, downstream as in ``choice``."""
    nxt = net.next_pair[k][pos]
    return [k] + (net.follow(nxt, choice) if nxt >= 0 else [])


def recorded_chain(net: Network, split: np.ndarray, k: int) -> list[int]:
    """Pairs that pair ``k``'s traffic visited in a recorded wave."""
    chain = []
    while k >= 0:
        chain.append(k)
        slots = net.slots[k]
        pos = int(np.argmax(split[slots[0]: slots[-1] + 1]))
        k = net.next_pair[k][pos]
    return chain


def hypothetical_snapshot(state: WaveState, k: int, pos: int, choice: Mapping[int, int],
                          amount: float) -> WaveSnapshot:
    """Windowed loads one wave ahead if pair ``k`` sends ``amount`` packets to option ``pos``.

    Other nodes' windowed loads stay frozen.  Only node ``k``'s own window
    contribution moves: its oldest wave leaves a full window and ``amount``
    enters along the candidate chain.  The result is a steady rate
    (``x = X``), so the world reward compares the cost rate each candidate
    leads to.
    """
    net = state.net
    if not 0 <= pos < len(net.options[k]):
        raise RoutingError(f"option {pos} is not a legal next hop for {net.pair_name(k)}")
    n = len(state.window)
    delta = np.zeros(net.K)
    delta[candidate_chain(net, k, pos, choice)] = amount
    if n == state.window_waves:
        old = state.window[0]
        if old.x[k] > 0:
            delta[recorded_chain(net, old.split, k)] -= old.x[k]
        X = state.X + delta / n
    else:
        X = state.X + delta / (n + 1)
    np.maximum(X, 0.0, out=X)
    return WaveSnapshot(net, X, X)


def hypothetical_wlr(state: WaveState, node: Pair, candidate: str, decisions: Mapping[Pair, str] | None = None,
                     amount: float | None = None) -> float:
    """Id-level wrapper: WLR if ``node`` routes to ``candidate`` this wave."""
    from .engine import decisions_to_choice

    net = state.net
    k = net.pair_of(node)
    try:
        pos = net.option_names(k).index(candidate)
    except ValueError:
        raise RoutingError(f"{candidate!r} is not a legal next hop for {node}") from None
    choice = decisions_to_choice(net, decisions or {})
    if amount is None:
        amount = expected_amount(state, k)
    return wave_wlr(hypothetical_snapshot(state, k, pos, choice, amount), node)


def expected_amount(state: WaveState, k: int) -> float:
    """Traffic a node expects when it is not told: injected packets, else last wave's."""
    net = state.net
    injected = sum(p for j, p, _ in net.commodities if j == k)
    if injected:
        return float(injected)
    return float(state.x[k]) if state.x[k] > 0 else float(state.X[k])
