"""MIP backends behind a narrow load / warm_start / add_rows / solve contract.

``BuiltinBackend`` is a best-first branch-and-bound with depth-first plunging
over the dual simplex in :mod:`topcut.simplex`.  ``HighsBackend`` hands the
same compiled model to HiGHS through :func:`scipy.optimize.milp`; it is only
used when explicitly requested.
"""

from __future__ import annotations

import heapq
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Sequence

import numpy as np
import scipy.sparse as sp

from .model import CutKind, LinearRow, MipModel, VarRef
from .simplex import INFEASIBLE, OPTIMAL, TIME_LIMIT, DualSimplex, LPError

log = logging.getLogger(__name__)

INT_TOL = 1e-6
FEAS_TOL = 1e-6
EXTERNAL_ENV = "TOPCUT_EXTERNAL_SOLVER"
# pooled families the builtin backend keeps out of the LP until violated
LAZY_KINDS = frozenset({CutKind.GSEC, CutKind.GSEC_GAMMA, CutKind.CLIQUE, CutKind.INDEP_SET})
LAZY_BATCH = 100


class BackendError(RuntimeError):
    pass


class BackendUnavailable(BackendError):
    pass


class InfeasibleModel(BackendError):
    pass


@dataclass
class SolveOutcome:
    upper_bound: float
    incumbent: Optional[Dict[VarRef, float]] = None
    proved_optimal: bool = False
    objective: Optional[float] = None
    status: str = "optimal"
    nodes: int = 0
    lp_iterations: int = 0


class SolverBackend(Protocol):
    def load(self, model: MipModel) -> None: ...

    def warm_start(self, assignment: Dict[VarRef, float]) -> bool: ...

    def add_rows(self, rows: Sequence[LinearRow]) -> None: ...

    def solve(self, time_limit: float, cutoff: Optional[float] = None) -> SolveOutcome: ...


# -- compilation ------------------------------------------------------------

@dataclass
class Compiled:
    c: np.ndarray
    A: sp.csr_matrix
    lo: np.ndarray
    hi: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    klass: np.ndarray
    integral_objective: bool
    trivially_infeasible: bool = False
    lazy: Optional[np.ndarray] = None  # per compiled row


def compile_rows(model: MipModel, rows: Sequence[LinearRow]):
    """Sparse rows over the model's columns; inactive variables count as zero.

    Rows left without active terms are dropped.  Returns ``(A, lo, hi,
    infeasible, lazy)`` where ``infeasible`` flags a dropped row violated at
    zero and ``lazy`` marks rows of the :data:`LAZY_KINDS` families.
    """
    index = model.index
    data: List[float] = []
    cols: List[int] = []
    indptr = [0]
    lo: List[float] = []
    hi: List[float] = []
    infeasible = False
    lazy: List[bool] = []
    for row in rows:
        n_before = len(cols)
        for ref, coef in row.terms:
            k = index.get(ref)
            if k is not None:
                cols.append(k)
                data.append(coef)
        if len(cols) == n_before:
            infeasible |= not row.satisfied({})
            continue
        indptr.append(len(cols))
        lazy.append(row.kind in LAZY_KINDS)
        lo.append(row.rhs if row.sense in (">=", "=") else -np.inf)
        hi.append(row.rhs if row.sense in ("<=", "=") else np.inf)
    A = sp.csr_matrix((data, cols, indptr), shape=(len(lo), model.n_vars))
    A.sum_duplicates()
    return (A, np.array(lo, dtype=float), np.array(hi, dtype=float), infeasible,
            np.array(lazy, dtype=bool))


def compile_model(model: MipModel) -> Compiled:
    n = model.n_vars
    c = np.zeros(n)
    for ref, coef in model.objective:
        c[model.index[ref]] += coef
    A, lo, hi, bad, lazy = compile_rows(model, model.rows)
    lb = np.zeros(n)
    ub = np.ones(n)
    for ref in model.fixed_zero:
        ub[model.index[ref]] = 0.0
    klass = np.array([model.branching_priority[ref.kind] for ref in model.columns], dtype=int)
    integral = bool(np.all(np.abs(c - np.round(c)) < 1e-12))
    return Compiled(c, A, lo, hi, lb, ub, klass, integral, bad, lazy)


def _vector_to_assignment(model: MipModel, x: np.ndarray) -> Dict[VarRef, float]:
    return {model.columns[k]: 1.0 for k in np.nonzero(x > 0.5)[0]}


def _assignment_to_vector(model: MipModel, assignment: Dict[VarRef, float]) -> Optional[np.ndarray]:
    x = np.zeros(model.n_vars)
    for ref, v in assignment.items():
        if abs(v) <= INT_TOL:
            continue
        k = model.index.get(ref)
        if k is None:
            return None
        x[k] = v
    return x


def _feasible(comp: Compiled, x: np.ndarray) -> bool:
    if np.any(x < comp.lb - FEAS_TOL) or np.any(x > comp.ub + FEAS_TOL):
        return False
    act = comp.A @ x
    return bool(np.all(act >= comp.lo - FEAS_TOL) and np.all(act <= comp.hi + FEAS_TOL))


def _trivial_bound(comp: Compiled) -> float:
    return float(np.maximum(comp.c * comp.lb, comp.c * comp.ub).sum())


# -- builtin branch-and-bound --------------------------------------------------

@dataclass(order=True)
class _Node:
    key: float
    seq: int
    bound: float = field(compare=False)
    fixings: tuple = field(compare=False)
    basis: object = field(compare=False)


class BuiltinBackend:
    """Best-bound branch-and-bound with plunging.  Fractional customer visits
    are branched on first, then y columns, then x columns.

    Rows of the pooled cut families start outside the LP and are pulled in
    whenever a node's LP point violates them, so the dense basis stays small.
    Every incumbent is still checked against the full row set.
    """

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed
        self.model: Optional[MipModel] = None
        self._comp: Optional[Compiled] = None
        self._lp: Optional[DualSimplex] = None
        self._active: List[int] = []  # compiled rows present in the LP, in LP order
        self._in_lp = np.zeros(0, dtype=bool)
        self._pending = None  # (row ids, CSR) of compiled rows not in the LP
        self._n_rows = 0
        self._incumbent: Optional[np.ndarray] = None
        self._best_ub = math.inf
        self._visit: List[tuple] = []  # (y columns, visit row) per customer
        self._lp_row: Dict[int, int] = {}
        self._visit_slack_hi: List[float] = []
        self.nodes = 0

    def load(self, model: MipModel) -> None:
        self.model = model
        self._comp = compile_model(model)
        self._n_rows = len(model.rows)
        self._lp = None
        self._in_lp = ~self._comp.lazy
        self._active = list(np.nonzero(self._in_lp)[0])
        self._pending = None
        self._incumbent = None
        self._best_ub = math.inf
        # per column and direction (0 down, 1 up): summed bound loss per unit moved
        self._find_visit_rows()

    def warm_start(self, assignment: Dict[VarRef, float]) -> bool:
        x = _assignment_to_vector(self.model, assignment)
        if x is None or not _feasible(self._comp, x):
            return False
        if self._incumbent is None or self._comp.c @ x > self._comp.c @ self._incumbent:
            self._incumbent = x
        return True

    def add_rows(self, rows: Sequence[LinearRow]) -> None:
        model = self.model
        model.add_rows(rows)
        new = model.rows[self._n_rows:]
        self._n_rows = len(model.rows)
        if not new:
            return
        A, lo, hi, bad, lazy = compile_rows(model, new)
        comp = self._comp
        first = comp.A.shape[0]
        comp.A = sp.vstack([comp.A, A], format="csr")
        comp.lo = np.concatenate([comp.lo, lo])
        comp.hi = np.concatenate([comp.hi, hi])
        comp.lazy = np.concatenate([comp.lazy, lazy])
        comp.trivially_infeasible |= bad
        self._in_lp = np.concatenate([self._in_lp, np.zeros(len(lo), dtype=bool)])
        self._pending = None
        self._activate([first + k for k in np.nonzero(~lazy)[0]])
        if self._incumbent is not None and not _feasible(comp, self._incumbent):
            self._incumbent = None

    # -- solve ------------------------------------------------------------
    def _objective(self, x: np.ndarray) -> float:
        v = float(self._comp.c @ x)
        return float(round(v)) if self._comp.integral_objective else v

    def _effective(self, bound: float) -> float:
        if self._comp.integral_objective:
            return math.floor(bound + 1e-5)
        return bound - 1e-9

    def _outcome(self, ub: float, optimal: bool, status: str, lp_iters: int) -> SolveOutcome:
        ub = min(ub, self._best_ub)
        self._best_ub = ub
        inc = self._incumbent
        return SolveOutcome(
            upper_bound=ub,
            incumbent=None if inc is None else _vector_to_assignment(self.model, inc),
            proved_optimal=optimal and inc is not None,
            objective=None if inc is None else self._objective(inc),
            status=status,
            nodes=self.nodes,
            lp_iterations=lp_iters,
        )

    def solve(self, time_limit: float, cutoff: Optional[float] = None) -> SolveOutcome:
        comp = self._comp
        if comp is None:
            raise BackendError("no model loaded")
        if comp.trivially_infeasible or np.any(comp.lb > comp.ub):
            raise InfeasibleModel("a row without active variables is violated")
        self.nodes = 0
        if time_limit <= 0:
            return self._outcome(_trivial_bound(comp), False, TIME_LIMIT, 0)
        deadline = time.monotonic() + time_limit
        if self._lp is None:
            self._rebuild(comp.lb, comp.ub, seed_shift=0)
        lp = self._lp
        self._lp_row = {row: k for k, row in enumerate(self._active)}
        self._visit_slack_hi = [lp.upper[lp.n + self._lp_row[row]] for _, row in self._visit]
        iters0 = lp.iterations
        integral = comp.integral_objective

        best = self._objective(self._incumbent) if self._incumbent is not None else -math.inf
        floor_val = -math.inf
        if cutoff is not None:
            floor_val = (math.ceil(cutoff - 1e-9) - 1) if integral else cutoff - 1e-9
        threshold = max(best, floor_val)

        heap: List[_Node] = []
        seq = 0
        lost = -math.inf  # bound of nodes abandoned without resolution
        fixings: tuple = ()
        parent_bound = _trivial_bound(comp)
        root_basis = None
        status = self._lp_solve(deadline)
        lp = self._lp
        if status == INFEASIBLE and self._incumbent is None and cutoff is None:
            raise InfeasibleModel("LP relaxation is infeasible")
        timed_out = False
        while True:
            self.nodes += 1
            if status == TIME_LIMIT:
                timed_out = True
                bound = lp.bound() if lp.status is not None else parent_bound
                lost = max(lost, min(parent_bound, bound))
                break
            if status == OPTIMAL:
                bound = lp.bound()
                if self._effective(bound) > threshold and self._separate_lazy(lp.values):
                    self.nodes -= 1
                    status = self._lp_solve(deadline)
                    lp = self._lp
                    continue
                if not fixings:
                    root_basis = lp.snapshot()
                if self._effective(bound) > threshold:
                    x = lp.values
                    j = self._branch_var(x)
                    if j is None:
                        xr = np.round(x)
                        if _feasible(comp, xr):
                            val = self._objective(xr)
                            if val > best:
                                best = val
                                self._incumbent = xr
                                threshold = max(best, floor_val)
                        else:
                            log.debug("rounded LP point rejected; node dropped with bound %s", bound)
                            lost = max(lost, bound)
                    else:
                        heapq.heappush(heap, _Node(-bound, seq, bound, fixings + ((j, 0.0),),
                                                   lp.snapshot()))
                        seq += 1
                        fixings = fixings + ((j, 1.0),)
                        parent_bound = bound
                        self._fix(lp, j, 1.0)
                        status = self._lp_solve(deadline)
                        lp = self._lp
                        continue
            elif status != INFEASIBLE:
                lost = max(lost, parent_bound)
            # next node: best bound first
            node = None
            while heap:
                cand = heapq.heappop(heap)
                if self._effective(cand.bound) > threshold:
                    node = cand
                    break
            if node is None:
                break
            if time.monotonic() > deadline:
                heapq.heappush(heap, node)
                timed_out = True
                break
            fixings = node.fixings
            parent_bound = node.bound
            self._apply_fixings(lp, fixings)
            try:
                lp.restore(node.basis)
            except LPError:
                log.warning("stored basis is singular; node restarts from the slack basis")
                self._rebuild(lp.lower[: lp.n].copy(), lp.upper[: lp.n].copy())
                self._apply_fixings(self._lp, fixings)
            status = self._lp_solve(deadline)
            lp = self._lp

        # put the LP back at the root so later add_rows can warm start
        self._apply_fixings(lp, ())
        try:
            if root_basis is not None:
                lp.restore(root_basis)
            else:
                lp.restore(lp.snapshot())
        except LPError:
            self._lp = None
        iters = (self._lp.iterations if self._lp is not None else lp.iterations) - iters0

        pending = max([n.bound for n in heap] + [lost])
        if pending > -math.inf and self._effective(pending) > threshold:
            ub = max(threshold, self._effective(min(pending, _trivial_bound(comp))))
            return self._outcome(ub, False, TIME_LIMIT if timed_out else "incomplete", iters)
        if self._incumbent is None and floor_val == -math.inf:
            raise InfeasibleModel("branch-and-bound tree exhausted without a feasible point")
        if self._incumbent is not None and best >= floor_val:
            return self._outcome(best, True, OPTIMAL, iters)
        return self._outcome(threshold, False, "cutoff", iters)

    def _lp_solve(self, deadline: float) -> str:
        try:
            return self._lp.solve(deadline)
        except LPError as exc:
            log.warning("LP failure (%s); rebuilding from the slack basis", exc)
            old = self._lp
            self._rebuild(old.lower[: old.n].copy(), old.upper[: old.n].copy())
            self._lp.lower[old.n:] = old.lower[old.n:]
            self._lp.upper[old.n:] = old.upper[old.n:]
            return self._lp.solve(deadline)

    def _rebuild(self, lb: np.ndarray, ub: np.ndarray, seed_shift: int = 1) -> None:
        comp = self._comp
        rows = np.array(self._active, dtype=int)
        self._lp = DualSimplex(comp.c, comp.A[rows], comp.lo[rows], comp.hi[rows], lb, ub,
                               seed=self.seed + seed_shift)

    def _activate(self, rows: Sequence[int]) -> None:
        rows = [int(k) for k in rows if not self._in_lp[k]]
        if not rows:
            return
        comp = self._comp
        self._in_lp[rows] = True
        self._active.extend(rows)
        self._pending = None
        if self._lp is not None:
            self._lp.add_rows(comp.A[rows], comp.lo[rows], comp.hi[rows])

    def _separate_lazy(self, x: np.ndarray) -> bool:
        """Move the rows most violated by ``x`` into the LP; False when none is."""
        comp = self._comp
        if self._pending is None:
            ids = np.nonzero(~self._in_lp)[0]
            self._pending = (ids, comp.A[ids])
        ids, A = self._pending
        if not len(ids):
            return False
        act = A @ x
        viol = np.maximum(comp.lo[ids] - act, act - comp.hi[ids])
        hit = np.nonzero(viol > FEAS_TOL)[0]
        if not len(hit):
            return False
        hit = hit[np.argsort(-viol[hit], kind="stable")[:LAZY_BATCH]]
        self._activate(sorted(ids[hit]))
        return True

    def _branch_var(self, x: np.ndarray) -> Optional[int]:
        """Most fractional column of the highest-priority class that has one.

        Before single y columns, a customer whose total visit ``sum_r y_ir``
        is fractional is branched on as a whole; such choices are returned
        as ``-(k + 1)`` for entry ``k`` of the visit table.
        """
        if self._visit:
            totals = np.array([x[cols].sum() for cols, _ in self._visit])
            frac = np.minimum(totals, 1.0 - totals)
            k = int(np.argmax(frac))
            if frac[k] > INT_TOL:
                return -(k + 1)
        frac = np.abs(x - np.round(x))
        klass = self._comp.klass
        for level in (0, 1):
            cand = np.where((klass == level) & (frac > INT_TOL), frac, -1.0)
            j = int(np.argmax(cand))
            if cand[j] > 0:
                return j
        return None

    def _find_visit_rows(self) -> None:
        """Pair each customer's y columns with its ``sum_r y_ir <= 1`` row."""
        model, comp = self.model, self._comp
        self._visit = []
        if model.fleet < 2:
            return
        cols: Dict[int, List[int]] = {}
        for k, ref in enumerate(model.columns):
            if ref.kind == "y":
                cols.setdefault(ref.i, []).append(k)
        by_support = {}
        A = comp.A
        for row in range(A.shape[0]):
            if comp.lazy[row] or comp.hi[row] != 1.0 or np.isfinite(comp.lo[row]):
                continue
            seg = slice(A.indptr[row], A.indptr[row + 1])
            if np.all(A.data[seg] == 1.0):
                by_support.setdefault(tuple(sorted(A.indices[seg])), row)
        for i in sorted(cols):
            row = by_support.get(tuple(sorted(cols[i])))
            if row is not None and len(cols[i]) >= 2:
                self._visit.append((np.array(cols[i]), row))

    def _apply_fixings(self, lp: DualSimplex, fixings: tuple) -> None:
        """Set every bound (structural and visit-row slack) for ``fixings``."""
        comp = self._comp
        lb = comp.lb.copy()
        ub = comp.ub.copy()
        ups = []
        for j, v in fixings:
            if j >= 0:
                lb[j] = ub[j] = v
            elif v == 0.0:
                ub[self._visit[-j - 1][0]] = 0.0
            else:
                ups.append(-j - 1)
        lp.set_all_bounds(lb, ub)
        for k, (_, row) in enumerate(self._visit):
            s = lp.n + self._lp_row[row]
            lp.lower[s] = -1.0
            lp.upper[s] = -1.0 if k in ups else self._visit_slack_hi[k]

    def _fix(self, lp: DualSimplex, j: int, v: float) -> None:
        """Impose one branching decision on the current LP."""
        if j >= 0:
            lp.set_bounds(j, v, v)
        elif v == 0.0:
            for col in self._visit[-j - 1][0]:
                lp.set_bounds(int(col), 0.0, 0.0)
        else:
            s = lp.n + self._lp_row[self._visit[-j - 1][1]]
            lp.set_bounds(s, -1.0, -1.0)


# -- external adapter ------------------------------------------------------------

class HighsBackend:
    """HiGHS via :func:`scipy.optimize.milp`; branching priorities are not passed on."""

    def __init__(self) -> None:
        self.model: Optional[MipModel] = None
        self._comp: Optional[Compiled] = None
        self._incumbent: Optional[np.ndarray] = None
        self._best_ub = math.inf

    def load(self, model: MipModel) -> None:
        self.model = model
        self._comp = compile_model(model)
        self._incumbent = None
        self._best_ub = math.inf

    def warm_start(self, assignment: Dict[VarRef, float]) -> bool:
        x = _assignment_to_vector(self.model, assignment)
        if x is None or not _feasible(self._comp, x):
            return False
        self._incumbent = x
        return True

    def add_rows(self, rows: Sequence[LinearRow]) -> None:
        before = len(self.model.rows)
        self.model.add_rows(rows)
        self._comp = compile_model(self.model)
        if len(self.model.rows) != before and self._incumbent is not None \
                and not _feasible(self._comp, self._incumbent):
            self._incumbent = None

    def solve(self, time_limit: float, cutoff: Optional[float] = None) -> SolveOutcome:
        from scipy.optimize import Bounds, LinearConstraint, milp

        comp = self._comp
        if comp.trivially_infeasible:
            raise InfeasibleModel("a row without active variables is violated")
        inc_val = None if self._incumbent is None else float(comp.c @ self._incumbent)
        if time_limit <= 0:
            ub = min(_trivial_bound(comp), self._best_ub)
            return SolveOutcome(ub, self._as_assignment(self._incumbent), False, inc_val, TIME_LIMIT)
        cons = [LinearConstraint(comp.A, comp.lo, comp.hi)] if comp.A.shape[0] else []
        res = milp(-comp.c, constraints=cons, integrality=np.ones_like(comp.c),
                   bounds=Bounds(comp.lb, comp.ub), options={"time_limit": float(time_limit)})
        if res.status == 2:
            raise InfeasibleModel(res.message)
        if res.x is not None:
            x = np.round(res.x)
            if _feasible(comp, x) and (inc_val is None or comp.c @ x > inc_val):
                self._incumbent = x
                inc_val = float(comp.c @ x)
        dual = getattr(res, "mip_dual_bound", None)
        ub = -dual if dual is not None and np.isfinite(dual) else _trivial_bound(comp)
        if comp.integral_objective:
            ub = math.floor(ub + 1e-6)
            inc_val = None if inc_val is None else float(round(inc_val))
        optimal = res.status == 0 and inc_val is not None
        if optimal:
            ub = inc_val
        ub = min(ub, self._best_ub)
        self._best_ub = ub
        status = OPTIMAL if optimal else TIME_LIMIT
        return SolveOutcome(ub, self._as_assignment(self._incumbent), optimal, inc_val, status)

    def _as_assignment(self, x):
        return None if x is None else _vector_to_assignment(self.model, x)


def make_backend(kind: str = "builtin", external_solver: Optional[str] = None, seed: int = 0):
    """``builtin`` or ``external``; the external engine comes from the argument or
    the ``TOPCUT_EXTERNAL_SOLVER`` environment variable, never by fallback."""
    if kind == "builtin":
        return BuiltinBackend(seed=seed)
    if kind == "external":
        engine = external_solver or os.environ.get(EXTERNAL_ENV)
        if not engine:
            raise BackendUnavailable(
                "external backend requested but no engine configured; "
                f"set {EXTERNAL_ENV}=highs or pass --external-solver highs")
        if engine.lower() != "highs":
            raise BackendUnavailable(f"unsupported external engine {engine!r}; available: highs")
        return HighsBackend()
    raise BackendUnavailable(f"unknown backend {kind!r}; use 'builtin' or 'external'")
