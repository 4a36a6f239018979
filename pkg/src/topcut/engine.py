"""The cutting-plane loop, staged cut generation and the shared bounds ledger.

``Engine.cpa`` solves one (possibly derived) model, separating subtours on
each integer optimum until the optimum is a set of simple ``d -> a`` paths.
On the original instance each non-final iteration also runs one stage of
``Engine.cea``:

* stages ``1 .. m-1``: bound ``g``-vehicle profits and customer counts;
  the last of these also bounds the customer count of a single tour;
* stage ``m``: certify mandatory customers;
* stage ``m+1``: grow the incompatibility graphs, then add clique and
  independent-set rows.

All knowledge lives in a :class:`BoundsLedger` in semantic form and is
turned into rows per derived model, since a row valid for one derived model
is not always valid for another.  Every pooled row holds for (a tour
permutation of) every solution of the instance whose profit reaches the
current lower bound, which always includes the optimum.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from . import incompat as inc
from .backend import InfeasibleModel, make_backend
from .instance import EPS, AccessibilityMask, Instance, accessibility
from .model import (
    CutKind, InfeasibleInstance, LinearRow, MipModel, VarRef, add_symmetry_rows, build_base,
    tours_to_assignment, xv, yv,
)
from .primal import Solution, construct
from .separation import Subtour, emit_gsecs, emit_plain_secs, extract_tours, find_subtours

log = logging.getLogger(__name__)

Arc = Tuple[int, int]

COMPONENTS = ("gsec", "symmetry", "bounds", "mandatory", "clique", "indep", "enhance")
_ALIASES = {
    "gsec": "gsec", "gsecgamma": "gsec",
    "symmetry": "symmetry",
    "bounds": "bounds", "bound": "bounds", "profitub": "bounds", "profitlb": "bounds",
    "countub": "bounds", "countlb": "bounds",
    "mandatory": "mandatory",
    "clique": "clique", "cliques": "clique",
    "indep": "indep", "indepset": "indep",
    "enhance": "enhance", "incompat": "enhance",
}


def parse_disabled(names: Iterable[str]) -> FrozenSet[str]:
    out = set()
    for name in names:
        for part in str(name).split(","):
            key = part.strip().lower().replace("-", "").replace("_", "")
            if not key:
                continue
            if key not in _ALIASES:
                raise ValueError(f"unknown component {part!r}; choose from {', '.join(COMPONENTS)}")
            out.add(_ALIASES[key])
    return frozenset(out)


@dataclass
class EngineConfig:
    time_limit: float = 7200.0
    cut_time_limit: float = 3600.0
    tm1: float = 5.0
    disabled: FrozenSet[str] = frozenset()
    backend: str = "builtin"
    external_solver: Optional[str] = None
    seed: int = 0
    full_subsets: bool = False
    heuristic_budget: float = 0.5
    probe_heuristic_budget: float = 0.02
    phase_shares: Tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    cache_dir: Optional[Path] = None
    arc_pair_cap: int = 2000

    def enabled(self, component: str) -> bool:
        return component not in self.disabled


@dataclass(frozen=True)
class DerivedInstance:
    """Which model to build: fleet override, objective change, removal or forced pair."""

    fleet: int
    unit: bool = False
    min_count: bool = False
    removed: Optional[int] = None
    forced_customers: Optional[Tuple[int, int]] = None
    forced_arcs: Optional[Tuple[Arc, Arc]] = None

    @property
    def objective(self) -> str:
        return "unit" if self.unit else "min_count" if self.min_count else "profit"

    def full_fleet(self, m: int) -> bool:
        """Solutions of this model are solutions of the original instance."""
        return self.fleet == m and not self.unit and not self.min_count

    def __str__(self) -> str:
        parts = [f"g={self.fleet}"]
        if self.unit:
            parts.append("unit")
        if self.min_count:
            parts.append("min-count")
        if self.removed is not None:
            parts.append(f"without {self.removed}")
        if self.forced_customers:
            parts.append("force {}~{}".format(*self.forced_customers))
        if self.forced_arcs:
            parts.append("force {}~{}".format(*self.forced_arcs))
        return "X[" + ", ".join(parts) + "]"


class Timer:
    def __init__(self, limit: float) -> None:
        self.start = time.monotonic()
        self.deadline = self.start + max(0.0, limit)

    def remaining(self) -> float:
        return self.deadline - time.monotonic()

    def expired(self) -> bool:
        return self.remaining() <= 0

    def elapsed(self) -> float:
        return time.monotonic() - self.start


@dataclass
class LedgerEntry:
    value: float
    optimal: bool


@dataclass
class BoundsLedger:
    customer_graph: inc.IncompatGraph
    arc_graph: inc.IncompatGraph
    ub: Dict[DerivedInstance, LedgerEntry] = field(default_factory=dict)
    lb: Dict[DerivedInstance, float] = field(default_factory=dict)
    subtours: List[FrozenSet[int]] = field(default_factory=list)
    cliques: Dict[str, List[FrozenSet]] = field(default_factory=lambda: {"customer": [], "arc": []})
    alphas: Dict[str, Dict[object, inc.AlphaBound]] = field(
        default_factory=lambda: {"customer": {}, "arc": {}})
    mandatory: Set[int] = field(default_factory=set)
    count_lb: Optional[int] = None
    best: Optional[Solution] = None
    phase_spent: List[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])

    def __post_init__(self) -> None:
        self._subtour_set = set(self.subtours)
        self._clique_set = {k: set(v) for k, v in self.cliques.items()}
        self.init_edges = {
            "customer": {frozenset(e) for e in self.customer_graph.edges()},
            "arc": {frozenset(e) for e in self.arc_graph.edges()},
        }

    @property
    def lb_value(self) -> int:
        return self.best.profit if self.best is not None else 0

    def record_ub(self, key: DerivedInstance, value: float, optimal: bool) -> None:
        old = self.ub.get(key)
        if old is None or value < old.value or (value == old.value and optimal):
            self.ub[key] = LedgerEntry(value, optimal or (old is not None and old.optimal
                                                           and old.value == value))

    def record_lb(self, key: DerivedInstance, value: float) -> None:
        if value > self.lb.get(key, -math.inf):
            self.lb[key] = value

    def ub_value(self, key: DerivedInstance) -> Optional[float]:
        e = self.ub.get(key)
        return None if e is None or not math.isfinite(e.value) else e.value

    def add_subtour(self, vertices: FrozenSet[int]) -> bool:
        if vertices in self._subtour_set:
            return False
        self._subtour_set.add(vertices)
        self.subtours.append(vertices)
        return True

    def add_cliques(self, kind: str, cliques: Iterable[FrozenSet]) -> List[FrozenSet]:
        new = []
        for c in cliques:
            if c not in self._clique_set[kind]:
                self._clique_set[kind].add(c)
                self.cliques[kind].append(c)
                new.append(c)
        return new

    def set_alphas(self, kind: str, bounds: Iterable[inc.AlphaBound]) -> None:
        for b in bounds:
            old = self.alphas[kind].get(b.node)
            # a larger neighbourhood with a fresh certificate supersedes the old one
            if old is None or b.neighborhood != old.neighborhood or b.alpha < old.alpha:
                self.alphas[kind][b.node] = b


@dataclass
class CpaResult:
    ub: float
    lb: float
    solution: Optional[Solution]
    optimal: bool
    iterations: int
    model: Optional[MipModel] = None


@dataclass
class EngineResult:
    ub: int
    lb: int
    solution: Solution
    optimal: bool
    iterations: int
    elapsed: float
    cut_counts: Dict[CutKind, int]
    mandatory: Set[int]
    first_subtours: int = 0


def star_clique(clique: Iterable[Arc]) -> bool:
    """Arcs sharing one tail or one head: already implied by the flow rows."""
    clique = list(clique)
    return len({i for i, _ in clique}) == 1 or len({j for _, j in clique}) == 1


def subset_windows(g: int, h: int, full: bool) -> List[Tuple[int, ...]]:
    """Vehicle subsets of size ``h``: contiguous rank windows, or all of them."""
    if full:
        return list(combinations(range(g), h))
    return [tuple(range(s, s + h)) for s in range(g - h + 1)]


def subset_rows(g: int, h: int, kind: CutKind, value: float, weights: Dict[int, float],
                sense: str, full: bool = False, offset: float = 0.0) -> List[LinearRow]:
    """``sum_{r in H} sum_i w_i y_ir  (sense)  value - offset`` for each window ``H``."""
    rows = []
    for H in subset_windows(g, h, full):
        terms = [(yv(i, r), w) for r in H for i, w in weights.items()]
        rows.append(LinearRow.make(terms, sense, value - offset, kind))
    return rows


class Engine:
    def __init__(self, inst: Instance, config: Optional[EngineConfig] = None) -> None:
        self.inst = inst
        self.config = config or EngineConfig()
        if inst.cost(inst.depart, inst.arrive) > inst.length_limit + EPS:
            raise InfeasibleInstance("the empty tour d->a exceeds the length limit")
        self.mask: AccessibilityMask = accessibility(inst)
        gc, ga = inc.init_graphs(inst, self.mask, self.config.cache_dir)
        self.ledger = BoundsLedger(gc, ga)
        self.timer = Timer(self.config.time_limit)
        self.cut_timer_start: Optional[float] = None
        self.last_assignment: Optional[Dict[VarRef, float]] = None
        self.first_subtours = 0
        self.events: List[dict] = []

    # -- derived-model construction -------------------------------------
    @property
    def original(self) -> DerivedInstance:
        return DerivedInstance(self.inst.fleet_size)

    def build_model(self, derived: DerivedInstance) -> MipModel:
        inst, cfg, L = self.inst, self.config, self.ledger
        model = build_base(inst, self.mask, fleet=derived.fleet, objective=derived.objective)
        if derived.fleet >= 2 and cfg.enabled("symmetry"):
            add_symmetry_rows(model)
        if derived.removed is not None:
            model.remove_customer(derived.removed)
        model.add_rows(self._forced_rows(derived))
        for U in L.subtours:
            model.add_rows(self._subtour_rows(Subtour(0, U), model))
        model.add_rows(self._graph_rows(derived.fleet))
        model.add_rows(self._bound_rows(derived))
        if derived.full_fleet(inst.fleet_size):
            for i in sorted(L.mandatory):
                model.add_row(self._mandatory_row(i, derived.fleet))
        return model

    def _forced_rows(self, derived: DerivedInstance) -> List[LinearRow]:
        g, rows = derived.fleet, []
        F = CutKind.FORCE_PAIR
        if derived.forced_customers is not None:
            a, b = (lambda r, v=v: yv(v, r) for v in derived.forced_customers)
        elif derived.forced_arcs is not None:
            a, b = (lambda r, e=e: xv(e[0], e[1], r) for e in derived.forced_arcs)
        else:
            return rows
        for ref in (a, b):
            rows.append(LinearRow.make([(ref(r), 1.0) for r in range(g)], "=", 1, F))
        for r in range(g):
            rows.append(LinearRow.make([(a(r), 1.0), (b(r), -1.0)], "=", 0, F))
        return rows

    def _subtour_rows(self, sub: Subtour, model: MipModel) -> List[LinearRow]:
        if self.config.enabled("gsec"):
            return emit_gsecs(sub, model)
        return emit_plain_secs(sub, model)

    def _graph_rows(self, g: int) -> List[LinearRow]:
        cfg, L = self.config, self.ledger
        rows = []
        if cfg.enabled("clique"):
            for kind in ("customer", "arc"):
                rows += inc.emit_clique_cuts(L.cliques[kind], kind, g)
        if cfg.enabled("indep"):
            for kind in ("customer", "arc"):
                rows += inc.emit_indepset_cuts(L.alphas[kind].values(), kind, g)
        return rows

    def _bound_rows(self, derived: DerivedInstance) -> List[LinearRow]:
        cfg, L, m = self.config, self.ledger, self.inst.fleet_size
        if not cfg.enabled("bounds"):
            return []
        g = derived.fleet
        p = self.inst.profits
        customers = sorted(self.mask.accessible_customers)
        profit_w = {i: float(p[i]) for i in customers}
        unit_w = {i: 1.0 for i in customers}
        full = cfg.full_subsets and m <= 4
        lb = L.lb_value
        rows: List[LinearRow] = []
        if derived.min_count:
            # a single tour of a solution reaching LB
            ub1 = L.ub_value(DerivedInstance(1))
            if ub1 is not None:
                rows += subset_rows(1, 1, CutKind.PROFIT_UB, ub1, profit_w, "<=")
            rest = L.ub_value(DerivedInstance(m - 1)) if m > 1 else 0.0
            if rest is not None and lb - rest > 0:
                rows += subset_rows(1, 1, CutKind.PROFIT_LB, lb, profit_w, ">=", offset=rest)
            return rows
        for h in range(1, g):
            ub = L.ub_value(DerivedInstance(h))
            if ub is not None:
                rows += subset_rows(g, h, CutKind.PROFIT_UB, ub, profit_w, "<=", full)
            cnt = L.ub_value(DerivedInstance(h, unit=True))
            if cnt is not None:
                rows += subset_rows(g, h, CutKind.COUNT_UB, cnt, unit_w, "<=", full)
        if derived.full_fleet(m):
            for h in range(1, m + 1):
                rest = 0.0 if h == m else L.ub_value(DerivedInstance(m - h))
                if rest is not None and lb - rest > 0:
                    rows += subset_rows(g, h, CutKind.PROFIT_LB, lb, profit_w, ">=", full,
                                        offset=rest)
        if L.count_lb:
            for r in range(g):
                rows.append(LinearRow.make([(yv(i, r), 1.0) for i in customers], ">=",
                                           L.count_lb, CutKind.COUNT_LB))
        return rows

    @staticmethod
    def _mandatory_row(i: int, g: int) -> LinearRow:
        return LinearRow.make([(yv(i, r), 1.0) for r in range(g)], "=", 1, CutKind.MANDATORY)

    def pool_rows(self, model: MipModel, derived: DerivedInstance) -> List[LinearRow]:
        """Everything the ledger currently implies for ``derived`` (dedup happens on add)."""
        rows = []
        for U in self.ledger.subtours:
            rows += self._subtour_rows(Subtour(0, U), model)
        rows += self._graph_rows(derived.fleet)
        rows += self._bound_rows(derived)
        if derived.full_fleet(self.inst.fleet_size):
            rows += [self._mandatory_row(i, derived.fleet) for i in sorted(self.ledger.mandatory)]
        return rows

    # -- primal side ----------------------------------------------------------
    def weight(self, derived: DerivedInstance, sol: Solution) -> float:
        if derived.unit:
            return float(len(sol.customers))
        if derived.min_count:
            return -float(len(sol.customers))
        return float(sol.profit)

    def accepts(self, derived: DerivedInstance, sol: Solution) -> bool:
        if len(sol.tours) != derived.fleet:
            return False
        if derived.removed is not None and derived.removed in sol.customers:
            return False
        if derived.forced_customers is not None:
            i, j = derived.forced_customers
            if not any(i in t and j in t for t in sol.tours):
                return False
        if derived.forced_arcs is not None:
            e, f = derived.forced_arcs
            if not any({e, f} <= set(zip(t, t[1:])) for t in sol.tours):
                return False
        return True

    def trivial_ub(self, derived: DerivedInstance) -> float:
        if derived.min_count:
            return 0.0
        custs = [i for i in self.inst.customers if i != derived.removed]
        if derived.unit:
            return float(len([i for i in custs if i in self.mask.accessible_customers]))
        return float(sum(self.inst.profits[i] for i in custs))

    def initial_solution(self, derived: DerivedInstance) -> Optional[Solution]:
        cfg, inst, L = self.config, self.inst, self.ledger
        if derived == self.original and L.best is not None:
            return L.best
        budget = cfg.probe_heuristic_budget
        kwargs = dict(fleet=derived.fleet, seed=cfg.seed, budget=budget)
        if derived.unit:
            kwargs["profits"] = [0] + [1] * inst.n_customers + [0]
        if derived.removed is not None:
            kwargs["removed"] = {derived.removed}
        sol = construct(inst, forced_customers=derived.forced_customers,
                        forced_arcs=derived.forced_arcs, **kwargs)
        if (sol is not None and L.best is not None and not derived.unit
                and derived.removed is None and derived.forced_customers is None
                and derived.forced_arcs is None and derived.fleet < inst.fleet_size):
            top = Solution.of(inst, L.best.tours[: derived.fleet])
            if top.profit > sol.profit:
                sol = top
        return sol

    # -- the cutting-plane loop --------------------------------------------
    def cpa(self, derived: DerivedInstance, deadline: float, original: bool = False,
            target: Optional[float] = None) -> CpaResult:
        """Solve ``derived``; with ``target`` stop as soon as ``UB < target``
        is certified or a solution reaching it is found."""
        inst, cfg, L = self.inst, self.config, self.ledger
        model = self.build_model(derived)
        backend = make_backend(cfg.backend, cfg.external_solver, cfg.seed)
        backend.load(model)
        ub = self.trivial_ub(derived)
        stored = L.ub_value(derived)
        if stored is not None:
            ub = min(ub, stored)
        sol = self.initial_solution(derived)
        lb = -math.inf
        if sol is not None and self.accepts(derived, sol):
            lb = self.weight(derived, sol)
        else:
            sol = None
        optimal = False
        iterations = 0
        step = 1
        while True:
            if sol is not None and lb >= ub:
                optimal = True
                break
            if target is not None and (ub < target or lb >= target):
                break
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            if sol is not None:
                backend.warm_start(tours_to_assignment(sol.tours))
            iterations += 1
            try:
                out = backend.solve(remaining, cutoff=target)
            except InfeasibleModel:
                ub = -math.inf
                break
            ub = min(ub, out.upper_bound)
            if not out.proved_optimal:
                if out.status == "cutoff":
                    continue
                break
            ub = min(ub, out.objective)
            assignment = out.incumbent
            subs = find_subtours(inst, assignment)
            cand = Solution.of(inst, extract_tours(inst, assignment, derived.fleet))
            if self.accepts(derived, cand) and self.weight(derived, cand) > lb:
                lb, sol = self.weight(derived, cand), cand
                if original:
                    L.best = cand
            if original:
                if iterations == 1:
                    self.first_subtours = len(subs)
                self.last_assignment = assignment
                self._progress(iterations, ub, lb, model, len(subs))
            if not subs or (sol is not None and lb >= ub):
                optimal = not subs or lb >= ub
                if not subs and sol is None:
                    sol, lb = cand, self.weight(derived, cand)
                break
            new_rows = self.separate(model, subs, cand, assignment)
            if original:
                self.cea(step)
                step += 1
                new_rows += self.pool_rows(model, derived)
            backend.add_rows(new_rows)
        if derived.full_fleet(inst.fleet_size) and not derived.removed and sol is not None:
            L.record_lb(derived, lb)
        return CpaResult(ub, lb, sol, optimal, iterations, model)

    def separate(self, model: MipModel, subs: Sequence[Subtour], cand: Solution,
                 assignment: Dict[VarRef, float]) -> List[LinearRow]:
        rows: List[LinearRow] = []
        for s in subs:
            self.ledger.add_subtour(s.vertices)
            rows += self._subtour_rows(s, model)
        if self.config.enabled("clique"):
            nodes = set(cand.customers).union(*(s.vertices for s in subs))
            arcs = {(ref.i, ref.j) for ref, v in assignment.items() if ref.kind == "x" and v > 0.5}
            found = self.ledger.add_cliques(
                "customer", inc.find_cliques(self.ledger.customer_graph, seeds=nodes))
            rows += inc.emit_clique_cuts(found, "customer", model.fleet)
            found = self.ledger.add_cliques("arc", [
                c for c in inc.find_cliques(self.ledger.arc_graph, seeds=arcs) if not star_clique(c)])
            rows += inc.emit_clique_cuts(found, "arc", model.fleet)
        return rows

    def _progress(self, it: int, ub: float, lb: float, model: MipModel, n_subs: int) -> None:
        counts = {k.value: v for k, v in sorted(model.count_by_kind().items())}
        event = {"iteration": it, "ub": ub, "lb": lb, "subtours": n_subs,
                 "elapsed": round(self.timer.elapsed(), 3), "rows": counts}
        self.events.append(event)
        log.info("cpa iteration=%d ub=%s lb=%s subtours=%d rows=%s", it, ub, lb, n_subs, counts)

    # -- staged cut generation ------------------------------------------------
    def _phase_deadline(self, phase: int) -> float:
        cfg, L = self.config, self.ledger
        budget = cfg.cut_time_limit * cfg.phase_shares[phase] - L.phase_spent[phase]
        return min(time.monotonic() + max(0.0, budget), self.timer.deadline)

    def _probe_deadline(self, phase_deadline: float) -> float:
        return min(time.monotonic() + self.config.tm1, phase_deadline)

    def cea(self, step: int) -> None:
        m = self.inst.fleet_size
        if step <= m - 1:
            phase = 0
        elif step == m:
            phase = 1
        elif step == m + 1:
            phase = 2
        else:
            return
        t0 = time.monotonic()
        try:
            if phase == 0:
                self._stage_bounds(step)
            elif phase == 1:
                self._stage_mandatory()
            else:
                self._stage_incompat()
        finally:
            self.ledger.phase_spent[phase] += time.monotonic() - t0

    def _stage_bounds(self, g: int) -> None:
        if not self.config.enabled("bounds"):
            return
        end = self._phase_deadline(0)
        for derived in (DerivedInstance(g), DerivedInstance(g, unit=True)):
            if time.monotonic() >= end:
                return
            res = self.cpa(derived, self._probe_deadline(end))
            self.ledger.record_ub(derived, res.ub, res.optimal)
            if res.solution is not None:
                self.ledger.record_lb(derived, res.lb)
            log.info("cea bounds %s ub=%s optimal=%s", derived, res.ub, res.optimal)
        if g == self.inst.fleet_size - 1:
            self._count_lower_bound(end)

    def _count_lower_bound(self, end: float) -> None:
        """Fewest customers any tour of a solution reaching LB can serve."""
        derived = DerivedInstance(1, min_count=True)
        remaining = self._probe_deadline(end) - time.monotonic()
        if remaining <= 0:
            return
        model = self.build_model(derived)
        backend = make_backend(self.config.backend, self.config.external_solver, self.config.seed)
        backend.load(model)
        try:
            out = backend.solve(remaining)
        except InfeasibleModel:
            log.info("cea count bound: single-tour model infeasible; skipped")
            return
        bound = math.ceil(-out.upper_bound - 1e-6)
        self.ledger.record_ub(derived, out.upper_bound, out.proved_optimal)
        if bound >= 1 and bound > (self.ledger.count_lb or 0):
            self.ledger.count_lb = bound
        log.info("cea count bound: every tour serves >= %s customers", bound)

    def _stage_mandatory(self) -> None:
        L = self.ledger
        if not self.config.enabled("mandatory") or L.best is None:
            return
        end = self._phase_deadline(1)
        lb = L.lb_value
        p = self.inst.profits
        # a customer missing from the LB solution cannot be mandatory
        for i in sorted(L.best.customers - L.mandatory, key=lambda v: (-p[v], v)):
            if time.monotonic() >= end:
                break
            derived = DerivedInstance(self.inst.fleet_size, removed=i)
            res = self.cpa(derived, self._probe_deadline(end), target=lb)
            L.record_ub(derived, res.ub, res.optimal)
            if res.ub < lb:
                L.mandatory.add(i)
                log.info("cea mandatory customer %d (ub without it %s < lb %s)", i, res.ub, lb)

    def _stage_incompat(self) -> None:
        cfg, L, inst = self.config, self.ledger, self.inst
        end = self._phase_deadline(2)
        m = inst.fleet_size
        best = L.best
        if cfg.enabled("enhance") and best is not None:
            lb = L.lb_value
            together = {frozenset(pr) for t in best.tours for pr in combinations(t[1:-1], 2)}
            best_arcs = {frozenset(pr) for t in best.tours
                         for pr in combinations(list(zip(t, t[1:])), 2)}

            def probe_customers(u, v, _dl):
                if frozenset((u, v)) in together:
                    return False
                res = self.cpa(DerivedInstance(m, forced_customers=(u, v)),
                               self._probe_deadline(end), target=lb)
                return res.ub < lb

            def probe_arcs(e, f, _dl):
                if frozenset((e, f)) in best_arcs:
                    return False
                res = self.cpa(DerivedInstance(m, forced_arcs=(e, f)),
                               self._probe_deadline(end), target=lb)
                return res.ub < lb

            added = inc.enhance_graph(L.customer_graph,
                                      inc.customer_candidates(inst, L.customer_graph),
                                      probe_customers, end)
            focus = {e for t in best.tours for e in zip(t, t[1:])}
            if self.last_assignment:
                focus |= {(r.i, r.j) for r, v in self.last_assignment.items()
                          if r.kind == "x" and v > 0.5}
            pairs = inc.arc_candidates(inst, L.arc_graph, focus)[: cfg.arc_pair_cap]
            added_arcs = inc.enhance_graph(L.arc_graph, pairs, probe_arcs, end)
            log.info("cea incompatibilities: +%d customer edges, +%d arc edges", added, added_arcs)
        self.add_graph_cuts()

    def add_graph_cuts(self) -> None:
        """Cliques seeded at every node and alpha bounds on both graphs."""
        cfg, L = self.config, self.ledger
        if cfg.enabled("clique"):
            L.add_cliques("customer", inc.find_cliques(L.customer_graph))
            L.add_cliques("arc", [c for c in inc.find_cliques(L.arc_graph) if not star_clique(c)])
        if cfg.enabled("indep"):
            L.set_alphas("customer", inc.alpha_bounds(L.customer_graph))
            L.set_alphas("arc", inc.alpha_bounds(L.arc_graph))

    # -- top level ----------------------------------------------------------------
    def solve(self) -> EngineResult:
        cfg, inst, L = self.config, self.inst, self.ledger
        self.add_graph_cuts()
        L.best = construct(inst, seed=cfg.seed, budget=min(cfg.heuristic_budget,
                                                           max(0.0, self.timer.remaining())))
        res = self.cpa(self.original, self.timer.deadline, original=True)
        best = L.best
        ub = res.ub
        if res.solution is not None and res.solution.profit > best.profit:
            best = res.solution
        lb = best.profit
        ub = int(math.floor(ub + 1e-6)) if math.isfinite(ub) else lb
        ub = max(ub, lb)
        optimal = res.optimal and ub == lb
        counts = res.model.count_by_kind() if res.model is not None else {}
        return EngineResult(ub, lb, best, optimal, res.iterations, self.timer.elapsed(),
                            counts, set(L.mandatory), self.first_subtours)


def solve(inst: Instance, config: Optional[EngineConfig] = None) -> EngineResult:
    return Engine(inst, config).solve()
