"""Closed-form and small numeric checks: the shared-link game, the
single-decision marginal rule, the static highway example, the
load-balancing threshold bounds and a steady-state system optimum."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize

from .topology import ConfigurationError, CostFunction, NetworkSpec, enumerate_paths, linear

A, B, TIE = "A", "B", "tie"


# -- shared-link game ----------------------------------------------------------

@dataclass(frozen=True)
class TwoRouterOutcome:
    alone: float  # one packet alone on the shared link
    both_shared_each: float
    both_shared_total: float
    both_alt_each: float
    both_alt_total: float

    def quoted(self) -> tuple[float, float, float]:
        """(alone, both-shared per packet, both-alt summed over the two packets)."""
        return self.alone, self.both_shared_each, self.both_alt_total


def two_router_game(shared: CostFunction, alt: CostFunction) -> TwoRouterOutcome:
    """Two routers with one packet each, a shared link and a private alternative."""
    s1, s2, a1 = shared(1), shared(2), alt(1)
    return TwoRouterOutcome(s1, s2, 2 * s2, a1, 2 * a1)


# -- one node deciding ---------------------------------------------------------

@dataclass(frozen=True)
class MarginalDecision:
    ispa: str
    lb: str
    ispa_costs: tuple[float, float]  # V_A(1), V_B(y_B + 1)
    lb_costs: tuple[float, float]  # V_A(1), marginal total cost of adding the packet to B
    disagree: bool


def _compare(a: float, b: float) -> str:
    if math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12):
        return TIE
    return A if a < b else B


def marginal_decision_rule(V_A: CostFunction, V_B: CostFunction, y_B: float) -> MarginalDecision:
    """Shortest-path choice versus the total-cost-minimising choice for a single packet.

    Link A is otherwise empty; link B already carries ``y_B`` packets.
    """
    if y_B < 0:
        raise ValueError("y_B must be non-negative")
    a = V_A(1)
    ispa = (a, V_B(y_B + 1))
    lb = (a, (y_B + 1) * V_B(y_B + 1) - y_B * V_B(y_B))
    ci, cl = _compare(*ispa), _compare(*lb)
    return MarginalDecision(ci, cl, ispa, lb, ci != cl)


# -- static highway example ----------------------------------------------------

HEX_CHEAP = linear(10)
HEX_EXPENSIVE = linear(1, 50)
HEX_BRIDGE = linear(1, 10)


def hex_static_cost(assignment: Sequence[int], variant: str | None = None) -> tuple[float, ...]:
    """Per-traveller cost on each path of the highway network.

    Paths are (left, right) for NetA and (left, right, crossing) for NetB;
    the crossing uses the left cheap segment, the bridge and the right cheap
    segment.
    """
    counts = [int(v) for v in assignment]
    if any(v < 0 for v in counts) or any(v != a for v, a in zip(counts, assignment)):
        raise ConfigurationError("assignment must be non-negative integers")
    if variant is None:
        variant = "NetA" if len(counts) == 2 else "NetB"
    expected = {"NetA": 2, "NetB": 3}.get(variant)
    if expected is None:
        raise ConfigurationError(f"unknown variant {variant!r}")
    if len(counts) != expected:
        raise ConfigurationError(f"{variant} has {expected} paths, got {len(counts)} counts")
    left, right = counts[0], counts[1]
    cross = counts[2] if expected == 3 else 0
    l_cheap, r_cheap = HEX_CHEAP(left + cross), HEX_CHEAP(right + cross)
    l_exp, r_exp = HEX_EXPENSIVE(left), HEX_EXPENSIVE(right)
    costs = [l_cheap + l_exp, r_exp + r_cheap]
    if expected == 3:
        costs.append(l_cheap + HEX_BRIDGE(cross) + r_cheap)
    return tuple(float(c) for c in costs)


# -- load-balancing threshold analysis -----------------------------------------

@dataclass(frozen=True)
class ThresholdProblem:
    """Two links whose costs depend on the fraction of the last W packets they carried."""

    C_A: CostFunction
    C_B: CostFunction
    W: int = 1000

    def __post_init__(self):
        if self.W < 4:
            raise ValueError("window must be at least 4 steps")
        grid = np.linspace(0.0, 1.0, 101)
        for name, f in (("C_A", self.C_A), ("C_B", self.C_B)):
            vals = [f(x) for x in grid]
            if any(b < a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} must be non-decreasing on [0, 1]")

    def gap(self, k: float) -> float:
        return self.C_A(k / self.W) - self.C_B(1 - k / self.W)


def footnote_problem(W: int = 1000) -> ThresholdProblem:
    return ThresholdProblem(CostFunction(c2=1.0), CostFunction(c1=1.0), W)


@dataclass(frozen=True)
class BoundsReport:
    k: float
    k_star: int
    upper1: float
    upper2: float
    low1: float
    low2: float
    lb_lower: float
    k_lb: float
    k_opt: float | None = None


def lb_threshold_solve(p: ThresholdProblem, tol: float = 1e-12) -> float:
    """Threshold k at which both links cost the same, by bisection on [1, W-1]."""
    lo, hi = 1.0, p.W - 1.0
    g_lo, g_hi = p.gap(lo), p.gap(hi)
    if g_lo == 0:
        return lo
    if g_hi == 0:
        return hi
    if (g_lo > 0) == (g_hi > 0):
        raise ValueError("C_A(k/W) - C_B(1-k/W) does not change sign on [1, W-1]")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        g = p.gap(mid)
        if abs(g) < tol or hi - lo < 1e-13 * p.W:
            return mid
        if (g > 0) == (g_lo > 0):
            lo, g_lo = mid, g
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _upper2(p: ThresholdProblem, k: float) -> float:
    W = p.W
    a = (k + 1) / W
    b = 1 + 2 / W - a
    return a * p.C_A(a) + b * p.C_B(b)


def _low2(p: ThresholdProblem, k: float) -> float:
    W = p.W
    a = (k - 1) / W
    b = 1 - 2 / W - a
    return a * p.C_A(a) + b * p.C_B(b)


def lb_bounds(p: ThresholdProblem, k: float) -> BoundsReport:
    """Average-cost bounds for threshold ``k``; ``lb_lower`` is the lower bound at k_LB."""
    W = p.W
    if not 1 < k < W - 1:
        raise ValueError(f"threshold must lie strictly between 1 and {W - 1}")
    ks = math.floor(k)
    upper1 = (ks + 1) / W * p.C_A((k + 1) / W) + (1 - ks / W) * p.C_B(1 - (k - 1) / W)
    low1 = ks / W * p.C_A((k - 1) / W) + (1 - 1 / W - ks / W) * p.C_B(1 - (k + 1) / W)
    k_lb = lb_threshold_solve(p)
    return BoundsReport(k, ks, upper1, _upper2(p, k), low1, _low2(p, k), _low2(p, k_lb), k_lb)


@dataclass(frozen=True)
class OptimalK:
    k: float
    upper2: float
    unimodal: bool
    closed_form: float | None = None  # only for the quadratic/linear footnote pair


def footnote_closed_form(W: int) -> float:
    """k'/W for C_A = x^2, C_B = x."""
    return -1 / 3 - 1 / W + math.sqrt(28 + 48 / W) / 6


def lb_optimal_k(p: ThresholdProblem, tol: float = 1e-9) -> OptimalK:
    """Minimiser of the second upper bound over thresholds in (1, W-1)."""
    lo, hi = 1.0, p.W - 1.0
    grid = np.linspace(lo, hi, 2001)
    vals = np.array([_upper2(p, k) for k in grid])
    d = np.sign(np.diff(vals))
    d = d[d != 0]
    unimodal = bool(np.all(np.diff(d) >= 0))
    if unimodal:
        i = int(np.argmin(vals))
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        mid = grid[i] if a < grid[i] < b else 0.5 * (a + b)
        res = optimize.minimize_scalar(lambda k: _upper2(p, k), bracket=(a, mid, b), method="golden",
                                       options={"xtol": tol})
        k = float(res.x)
    else:
        dense = np.linspace(lo, hi, 200001)
        k = float(dense[int(np.argmin([_upper2(p, v) for v in dense]))])
    closed = None
    if p.C_A == CostFunction(c2=1.0) and p.C_B == CostFunction(c1=1.0):
        closed = footnote_closed_form(p.W)
    return OptimalK(k, _upper2(p, k), unimodal, closed)


@dataclass(frozen=True)
class ThresholdRun:
    average_cost: float
    k_star: int | None
    steps: int
    increments_ok: bool
    absorbed: bool
    absorbed_at: int | None
    frequency_A: float


def lb_simulate(p: ThresholdProblem, k: float, T: int = 1_000_000) -> ThresholdRun:
    """Run the threshold policy for T steps with a W-step sliding window.

    The window starts empty and S counts A decisions over the available
    history; costs are averaged from step 2W on.
    """
    W = p.W
    if T < 10 * W:
        raise ValueError("T must be at least 10 W")
    window: deque[int] = deque()
    S = 0
    prev_S = 0
    ok = True
    total = 0.0
    counted = 0
    n_A = 0
    k_star = None
    absorbed_at = None
    left_after = False
    prev_choice = None
    ca, cb = p.C_A, p.C_B
    cache_a: dict[int, float] = {}
    cache_b: dict[int, float] = {}
    for t in range(T):
        choose_a = S <= k
        if t >= 2 * W:
            if choose_a:
                c = cache_a.get(S)
                if c is None:
                    c = cache_a[S] = ca(S / W)
            else:
                c = cache_b.get(S)
                if c is None:
                    c = cache_b[S] = cb(1 - S / W)
            total += c
            counted += 1
            n_A += choose_a
        if k_star is None and prev_choice is True and not choose_a:
            k_star = prev_S
            absorbed_at = t
        elif k_star is not None and S not in (k_star, k_star + 1):
            left_after = True
        prev_choice = choose_a
        window.append(choose_a)
        prev_S = S
        if len(window) > W:
            S += choose_a - window.popleft()
        else:
            S += choose_a
        if abs(S - prev_S) > 1:
            ok = False
    # the very first switch defines k*; absorption means S never left {k*, k*+1} afterwards
    absorbed = k_star is not None and not left_after
    return ThresholdRun(total / counted, k_star, T, ok, absorbed, absorbed_at, n_A / counted)


# -- steady-state system optimum -----------------------------------------------

@dataclass(frozen=True)
class SystemOptimum:
    per_packet: float
    path_flows: dict[tuple[str, ...], float]


def system_optimum(spec: NetworkSpec, starts: int = 8, seed: int = 0) -> SystemOptimum:
    """Lowest steady per-packet cost over fractional path flows.

    Each commodity's packets may be split arbitrarily across its paths; every
    router is charged load times V(load).
    """
    paths, owner = [], []
    for ci, c in enumerate(spec.commodities):
        for p in enumerate_paths(spec, c.source, c.destination):
            paths.append(p)
            owner.append(ci)
    routers = sorted({n for p in paths for n in p[1:-1]} | {c.source for c in spec.commodities})
    rix = {r: i for i, r in enumerate(routers)}
    incid = np.zeros((len(routers), len(paths)))
    for j, p in enumerate(paths):
        for n in p[:-1]:
            incid[rix[n], j] = 1.0
    costs = [spec.node(r).cost for r in routers]
    demand = np.array([c.packets for c in spec.commodities], dtype=float)
    total = demand.sum()
    if total <= 0:
        raise ValueError("network carries no traffic")
    owner = np.array(owner)

    def objective(f):
        z = incid @ np.maximum(f, 0.0)
        return sum(zi * cf(zi) for zi, cf in zip(z, costs)) / total

    cons = [{"type": "eq", "fun": (lambda f, i=i: f[owner == i].sum() - demand[i])}
            for i in range(len(demand)) if demand[i] > 0]
    bounds = [(0.0, demand[o]) for o in owner]
    rng = np.random.default_rng(seed)
    best = None
    for s in range(starts):
        f0 = np.empty(len(paths))
        for i in range(len(demand)):
            m = owner == i
            w = np.ones(m.sum()) if s == 0 else rng.dirichlet(np.ones(m.sum()))
            f0[m] = demand[i] * w / w.sum()
        res = optimize.minimize(objective, f0, method="SLSQP", bounds=bounds, constraints=cons,
                                options={"ftol": 1e-12, "maxiter": 500})
        if best is None or res.fun < best.fun:
            best = res
    flows = np.maximum(best.x, 0.0)
    return SystemOptimum(float(best.fun), {tuple(p): float(v) for p, v in zip(paths, flows)})
