"""Feasible TOP solutions: greedy insertion, local search and validation.

Every solution the engine hands to a backend comes from here, so tours are
always emitted in non-increasing order of (original) profit, matching the
symmetry rows.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Set, Tuple

from .instance import EPS, Instance, accessibility, _arc_chain
from .model import InfeasibleInstance

Tour = Tuple[int, ...]
RESTARTS = 8


@dataclass(frozen=True)
class Solution:
    tours: Tuple[Tour, ...]
    profit: int
    lengths: Tuple[float, ...]

    @classmethod
    def of(cls, inst: Instance, tours: Iterable[Sequence[int]]) -> "Solution":
        p = inst.profits
        tours = [tuple(t) for t in tours]
        tours.sort(key=lambda t: -sum(p[v] for v in t[1:-1]))
        return cls(tuple(tours), sum(p[v] for t in tours for v in t[1:-1]),
                   tuple(inst.path_length(t) for t in tours))

    @property
    def customers(self) -> Set[int]:
        return {v for t in self.tours for v in t[1:-1]}

    def tour_profits(self, inst: Instance) -> List[int]:
        p = inst.profits
        return [sum(p[v] for v in t[1:-1]) for t in self.tours]

    def to_text(self) -> str:
        return "".join(" ".join(map(str, t)) + "\n" for t in self.tours)

    @classmethod
    def from_text(cls, inst: Instance, text: str) -> "Solution":
        tours = [tuple(int(v) for v in line.split()) for line in text.splitlines() if line.strip()]
        return cls.of(inst, tours)


def validate_tours(inst: Instance, tours: Sequence[Sequence[int]], fleet: int) -> List[str]:
    """Independent feasibility check; returns the problems found (empty when feasible)."""
    d, a, L = inst.depart, inst.arrive, inst.length_limit
    problems = []
    if len(tours) != fleet:
        problems.append(f"expected {fleet} tours, got {len(tours)}")
    seen: Set[int] = set()
    for r, tour in enumerate(tours):
        if len(tour) < 2 or tour[0] != d or tour[-1] != a:
            problems.append(f"tour {r} does not run from d to a")
            continue
        inner = list(tour[1:-1])
        if any(v not in inst.customers for v in inner):
            problems.append(f"tour {r} visits a non-customer inside")
        if len(set(inner)) != len(inner):
            problems.append(f"tour {r} revisits a customer")
        dup = seen.intersection(inner)
        if dup:
            problems.append(f"tour {r} repeats customers {sorted(dup)} served elsewhere")
        seen.update(inner)
        length = inst.path_length(tour)
        if length > L + EPS:
            problems.append(f"tour {r} length {length:.6f} exceeds {L}")
    return problems


def validate_solution(inst: Instance, sol: Solution, fleet: Optional[int] = None) -> List[str]:
    fleet = inst.fleet_size if fleet is None else fleet
    problems = validate_tours(inst, sol.tours, fleet)
    p = inst.profits
    if sol.profit != sum(p[v] for t in sol.tours for v in t[1:-1]):
        problems.append("stated profit does not match the visited customers")
    tp = sol.tour_profits(inst)
    if any(tp[k] < tp[k + 1] for k in range(len(tp) - 1)):
        problems.append(f"tour profits {tp} are not non-increasing")
    return problems


# -- construction -----------------------------------------------------------

class _Builder:
    """Mutable working state shared by construction and local search."""

    def __init__(self, inst: Instance, fleet: int, weights: Sequence[float],
                 allowed: Set[int], locked: Set[Tuple[int, int]]):
        self.inst = inst
        self.c = inst.costs
        self.L = inst.length_limit
        self.w = weights
        self.allowed = allowed
        self.locked = locked
        self.pinned: Set[int] = set()  # customers that must stay where they are
        self.tours: List[List[int]] = [[inst.depart, inst.arrive] for _ in range(fleet)]

    def length(self, t: List[int]) -> float:
        c = self.c
        return float(sum(c[u, v] for u, v in zip(t, t[1:])))

    def served(self) -> Set[int]:
        return {v for t in self.tours for v in t[1:-1]}

    def value(self) -> float:
        return sum(self.w[v] for v in self.served())

    def total_length(self) -> float:
        return sum(self.length(t) for t in self.tours)

    def best_insertion(self, v: int, skip: Optional[int] = None):
        """Cheapest feasible (delta, tour, position) for inserting ``v``."""
        c, best = self.c, None
        for k, t in enumerate(self.tours):
            if k == skip:
                continue
            base = self.length(t)
            for pos in range(1, len(t)):
                u, w = t[pos - 1], t[pos]
                if (u, w) in self.locked:
                    continue
                delta = c[u, v] + c[v, w] - c[u, w]
                if base + delta <= self.L + EPS and (best is None or delta < best[0] - 1e-12):
                    best = (delta, k, pos)
        return best

    def greedy_fill(self, noise: Optional[random.Random] = None) -> bool:
        changed = False
        while True:
            free = sorted(self.allowed - self.served())
            pick = None
            for v in free:
                if self.w[v] <= 0:
                    continue
                ins = self.best_insertion(v)
                if ins is None:
                    continue
                score = self.w[v] / (ins[0] + 1e-6)
                if noise is not None:
                    score *= 0.7 + 0.6 * noise.random()
                if pick is None or score > pick[0] + 1e-12:
                    pick = (score, v, ins)
            if pick is None:
                return changed
            _, v, (_, k, pos) = pick
            self.tours[k].insert(pos, v)
            changed = True

    def two_opt(self) -> bool:
        c, changed = self.c, False
        for t in self.tours:
            if any((u, w) in self.locked for u, w in zip(t, t[1:])):
                continue
            improved = True
            while improved:
                improved = False
                for i in range(1, len(t) - 2):
                    for j in range(i + 1, len(t) - 1):
                        a, b, x, y = t[i - 1], t[i], t[j], t[j + 1]
                        if c[a, x] + c[b, y] < c[a, b] + c[x, y] - 1e-9:
                            t[i:j + 1] = reversed(t[i:j + 1])
                            improved = changed = True
        return changed

    def _removable(self, t: List[int], pos: int) -> bool:
        if t[pos] in self.pinned:
            return False
        return (t[pos - 1], t[pos]) not in self.locked and (t[pos], t[pos + 1]) not in self.locked

    def relocate(self) -> bool:
        """Move a customer to another tour when that shortens the total."""
        c, changed = self.c, False
        for k, t in enumerate(self.tours):
            pos = 1
            while pos < len(t) - 1:
                v = t[pos]
                if not self._removable(t, pos):
                    pos += 1
                    continue
                gain = c[t[pos - 1], v] + c[v, t[pos + 1]] - c[t[pos - 1], t[pos + 1]]
                ins = self.best_insertion(v, skip=k)
                if ins is not None and ins[0] < gain - 1e-9:
                    del t[pos]
                    self.tours[ins[1]].insert(ins[2], v)
                    changed = True
                    continue
                pos += 1
        return changed

    def swap(self) -> bool:
        """Replace a served customer by a more valuable free one."""
        c = self.c
        free = sorted(self.allowed - self.served(), key=lambda v: -self.w[v])
        for t in self.tours:
            base = self.length(t)
            for pos in range(1, len(t) - 1):
                v = t[pos]
                if not self._removable(t, pos):
                    continue
                u, w = t[pos - 1], t[pos + 1]
                for f in free:
                    if self.w[f] <= self.w[v]:
                        break
                    delta = c[u, f] + c[f, w] - c[u, v] - c[v, w]
                    if base + delta <= self.L + EPS:
                        t[pos] = f
                        return True
        return False


def _weights(inst: Instance, profits: Optional[Sequence[float]]) -> List[float]:
    return list(inst.profits if profits is None else profits)


def construct(inst: Instance, fleet: Optional[int] = None,
              profits: Optional[Sequence[float]] = None, removed: Iterable[int] = (),
              forced_customers: Optional[Tuple[int, int]] = None,
              forced_arcs: Optional[Tuple[Tuple[int, int], Tuple[int, int]]] = None,
              seed: int = 0, budget: float = 0.5) -> Optional[Solution]:
    """Greedy ratio insertion followed by :func:`improve`.

    ``profits`` overrides the weights the heuristic maximises (the returned
    :class:`Solution` still reports real profits).  With a forced pair the
    first tour is seeded with it; ``None`` is returned when that is impossible.
    """
    if inst.cost(inst.depart, inst.arrive) > inst.length_limit + EPS:
        raise InfeasibleInstance("the empty tour d->a exceeds the length limit")
    fleet = inst.fleet_size if fleet is None else fleet
    mask = accessibility(inst)
    allowed = set(mask.accessible_customers) - set(removed)
    locked: Set[Tuple[int, int]] = set()
    seed_tour = None
    if forced_customers is not None:
        i, j = forced_customers
        if not {i, j} <= allowed:
            return None
        d, a = inst.depart, inst.arrive
        options = [[d, i, j, a], [d, j, i, a]]
        seed_tour = min(options, key=inst.path_length)
    elif forced_arcs is not None:
        e, f = forced_arcs
        if not {e, f} <= set(mask.accessible_arcs):
            return None
        chains = [s for s in (_arc_chain(inst, e, f), _arc_chain(inst, f, e)) if s is not None]
        if not chains:
            return None
        seed_tour = min(chains, key=inst.path_length)
        if any(v not in allowed for v in seed_tour[1:-1]):
            return None
        locked = {e, f}
    if seed_tour is not None and inst.path_length(seed_tour) > inst.length_limit + EPS:
        return None
    if seed_tour is not None and fleet < 1:
        return None
    b = _Builder(inst, fleet, _weights(inst, profits), allowed, locked)
    if seed_tour is not None:
        b.tours[0] = list(seed_tour)
        b.pinned = set(seed_tour[1:-1])
    b.greedy_fill()
    return _improve_builder(b, seed, budget)


def improve(inst: Instance, sol: Solution, budget: float = 0.5, fleet: Optional[int] = None,
            profits: Optional[Sequence[float]] = None, removed: Iterable[int] = (),
            seed: int = 0) -> Solution:
    """Local search; never returns a solution of lower weight than ``sol``."""
    fleet = len(sol.tours) if fleet is None else fleet
    allowed = set(accessibility(inst).accessible_customers) - set(removed)
    b = _Builder(inst, fleet, _weights(inst, profits), allowed | sol.customers, set())
    b.tours = [list(t) for t in sol.tours]
    out = _improve_builder(b, seed, budget)
    w = b.w
    before = sum(w[v] for v in sol.customers)
    return out if sum(w[v] for v in out.customers) >= before else sol


def _improve_builder(b: _Builder, seed: int, budget: float) -> Solution:
    deadline = time.monotonic() + budget
    _local_search(b, deadline)
    best_tours = [list(t) for t in b.tours]
    best_key = (b.value(), -b.total_length())
    start = [list(t) for t in b.tours]
    rng = random.Random(seed)
    # a few seeded restarts with noisy insertion scores from the same start
    for _ in range(RESTARTS):
        if time.monotonic() >= deadline:
            break
        b.tours = [list(t) for t in start]
        for t in b.tours:
            drop = [pos for pos in range(1, len(t) - 1) if b._removable(t, pos) and rng.random() < 0.3]
            for pos in reversed(drop):
                del t[pos]
        b.greedy_fill(noise=rng)
        _local_search(b, deadline)
        key = (b.value(), -b.total_length())
        if key[0] > best_key[0] or (key[0] == best_key[0] and key[1] > best_key[1] + 1e-9):
            best_key = key
            best_tours = [list(t) for t in b.tours]
    return Solution.of(b.inst, best_tours)


def _local_search(b: _Builder, deadline: float) -> None:
    # every move strictly shortens a tour or strictly raises the weight, so this ends
    while time.monotonic() < deadline:
        moved = b.two_opt()
        moved |= b.relocate()
        moved |= b.greedy_fill()
        moved |= b.swap()
        if not moved:
            break
