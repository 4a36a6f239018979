"""Brute-force exact TOP solver for tiny instances.

Held-Karp over subsets gives the shortest ``d -> a`` path through every
customer subset; a memoised search over disjoint feasible subsets then
finds the best fleet assignment and lists every optimal partition.  Only
the instance's coordinates-derived cost matrix is used, nothing from the
cutting-plane machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

from .instance import EPS, Instance

MAX_CUSTOMERS = 12
MAX_FLEET = 3


class OracleLimitError(ValueError):
    pass


@dataclass(frozen=True)
class OracleSolution:
    tours: Tuple[Tuple[int, ...], ...]  # each d ... a, ordered by profit, non-increasing
    profit: int


@dataclass
class OracleResult:
    optimum: int
    optimal_solutions: List[OracleSolution]


@dataclass
class SubsetPaths:
    """Shortest path length (and one route) per feasible customer subset."""

    customers: List[int]
    length: Dict[int, float]
    route: Dict[int, Tuple[int, ...]]
    profit: Dict[int, int]

    def members(self, mask: int) -> List[int]:
        return [c for b, c in enumerate(self.customers) if mask >> b & 1]


def subset_paths(inst: Instance, fleet_limit: int = MAX_FLEET,
                 max_customers: int = MAX_CUSTOMERS) -> SubsetPaths:
    c = inst.costs
    d, a, L = inst.depart, inst.arrive, inst.length_limit
    custs = [i for i in inst.customers if c[d, i] + c[i, a] <= L + EPS]
    if len(custs) > max_customers:
        raise OracleLimitError(f"{len(custs)} accessible customers exceed the guard of {max_customers}")
    k = len(custs)
    # dp[(mask, last)] = shortest d -> ... -> last covering mask
    dp: Dict[Tuple[int, int], float] = {}
    parent: Dict[Tuple[int, int], int] = {}
    for b, i in enumerate(custs):
        if c[d, i] <= L + EPS:
            dp[(1 << b, b)] = float(c[d, i])
    for mask in range(1, 1 << k):
        for last in range(k):
            key = (mask, last)
            if key not in dp:
                continue
            base = dp[key]
            for nxt in range(k):
                if mask >> nxt & 1:
                    continue
                val = base + c[custs[last], custs[nxt]]
                # prune prefixes that cannot return within the limit
                if val + c[custs[nxt], a] > L + EPS:
                    continue
                nk = (mask | 1 << nxt, nxt)
                if val < dp.get(nk, math.inf):
                    dp[nk] = val
                    parent[nk] = last
    length = {0: float(c[d, a])} if c[d, a] <= L + EPS else {}
    route: Dict[int, Tuple[int, ...]] = {0: (d, a)} if length else {}
    best_last: Dict[int, int] = {}
    for (mask, last), val in dp.items():
        tot = val + c[custs[last], a]
        if tot <= L + EPS and tot < length.get(mask, math.inf):
            length[mask] = float(tot)
            best_last[mask] = last
    for mask, last in best_last.items():
        seq = []
        cur_mask, cur = mask, last
        while True:
            seq.append(custs[cur])
            prev = parent.get((cur_mask, cur))
            cur_mask &= ~(1 << cur)
            if prev is None:
                break
            cur = prev
        route[mask] = (d, *reversed(seq), a)
    p = inst.profits
    profit = {mask: sum(p[i] for b, i in enumerate(custs) if mask >> b & 1) for mask in length}
    return SubsetPaths(custs, length, route, profit)


def solve_exact(inst: Instance, fleet: Optional[int] = None,
                max_customers: int = MAX_CUSTOMERS, max_fleet: int = MAX_FLEET,
                profits: Optional[Tuple[int, ...]] = None) -> OracleResult:
    """Optimum and every optimal customer partition (up to tour order)."""
    m = inst.fleet_size if fleet is None else fleet
    if m > max_fleet:
        raise OracleLimitError(f"fleet of {m} exceeds the guard of {max_fleet}")
    sp = subset_paths(inst, m, max_customers)
    if not sp.length:
        raise OracleLimitError("even the empty tour exceeds the length limit")
    if profits is not None:
        sp.profit = {mask: sum(profits[i] for i in sp.members(mask)) for mask in sp.length}
    feasible = sorted(sp.length, key=lambda s: -sp.profit[s])
    full = (1 << len(sp.customers)) - 1

    @lru_cache(maxsize=None)
    def best(tours: int, avail: int) -> int:
        if tours == 0:
            return 0
        top = 0
        for s in feasible:
            if s & ~avail:
                continue
            val = sp.profit[s] + best(tours - 1, avail & ~s)
            if val > top:
                top = val
        return top

    optimum = best(m, full)
    found: List[OracleSolution] = []

    def collect(chosen: List[int], avail: int, acc: int, upper: int) -> None:
        left = m - len(chosen)
        if left == 0:
            if acc == optimum:
                tours = sorted(chosen, key=lambda s: (-sp.profit[s], s))
                found.append(OracleSolution(tuple(sp.route[s] for s in tours), acc))
            return
        for s in feasible:
            # tours listed in non-increasing bitmask order: one representative per multiset
            if s > upper or s & ~avail:
                continue
            if acc + sp.profit[s] + best(left - 1, avail & ~s) < optimum:
                continue
            collect(chosen + [s], avail & ~s, acc + sp.profit[s], s)

    collect([], full, 0, full)
    return OracleResult(optimum, found)


def subset_routes(inst: Instance, customers: List[int]) -> List[Tuple[int, ...]]:
    """Every visiting order of ``customers`` whose d->a path fits within L."""
    c = inst.costs
    d, a, L = inst.depart, inst.arrive, inst.length_limit
    out: List[Tuple[int, ...]] = []

    def rec(path: List[int], left: List[int], length: float) -> None:
        if not left:
            if length + c[path[-1], a] <= L + EPS:
                out.append((*path, a))
            return
        for k, v in enumerate(left):
            step = length + c[path[-1], v]
            # triangle inequality: finishing costs at least the direct leg to a
            if step + c[v, a] <= L + EPS:
                rec(path + [v], left[:k] + left[k + 1:], step)

    rec([d], list(customers), 0.0)
    return out


def enumerate_feasible(inst: Instance, fleet: Optional[int] = None,
                       max_customers: int = 8, limit: int = 200_000,
                       all_routes: bool = False) -> List[OracleSolution]:
    """Every feasible solution, as customer partitions with their shortest
    routes or, with ``all_routes``, with every feasible visiting order."""
    m = inst.fleet_size if fleet is None else fleet
    sp = subset_paths(inst, m, max_customers)
    feasible = sorted(sp.length)
    routes = {s: (subset_routes(inst, sp.members(s)) if all_routes else [sp.route[s]])
              for s in feasible}
    out: List[OracleSolution] = []

    def emit(chosen: List[int], k: int, picked: List[Tuple[int, ...]]) -> None:
        if len(out) >= limit:
            raise OracleLimitError("too many feasible solutions to enumerate")
        if k == len(chosen):
            out.append(OracleSolution(tuple(picked), sum(sp.profit[s] for s in chosen)))
            return
        for route in routes[chosen[k]]:
            emit(chosen, k + 1, picked + [route])

    def rec(chosen: List[int], used: int, upper: int) -> None:
        if len(chosen) == m:
            emit(sorted(chosen, key=lambda s: (-sp.profit[s], s)), 0, [])
            return
        for s in feasible:
            if s > upper:
                break
            if s & used:
                continue
            rec(chosen + [s], used | s, s)

    rec([], 0, max(feasible))
    return out
