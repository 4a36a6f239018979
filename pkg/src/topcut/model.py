"""Solver-independent MIP formulation of the TOP and its typed cut pool.

Columns exist only for accessible customers and arcs.  Rows may still name
inactive variables (the inaccessibility pins do exactly that); backends treat
inactive variables as fixed at zero.
"""

from __future__ import annotations

import logging
import math
from enum import Enum
from functools import reduce
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

from .instance import EPS, AccessibilityMask, InvalidInstance, Instance

log = logging.getLogger(__name__)


class InfeasibleInstance(InvalidInstance):
    """Even the empty tour ``d -> a`` exceeds the length limit."""


class ModelError(ValueError):
    pass


class CutKind(str, Enum):
    BASE = "Base"
    GSEC = "Gsec"
    GSEC_GAMMA = "GsecGamma"
    SYMMETRY = "Symmetry"
    INACCESSIBLE = "Inaccessible"
    PROFIT_UB = "ProfitUB"
    PROFIT_LB = "ProfitLB"
    COUNT_UB = "CountUB"
    COUNT_LB = "CountLB"
    MANDATORY = "Mandatory"
    CLIQUE = "Clique"
    INDEP_SET = "IndepSet"
    FORCE_PAIR = "ForcePair"


class VarRef(NamedTuple):
    kind: str  # "y" (customer served) or "x" (arc used)
    i: int
    j: int  # -1 for y variables
    r: int  # vehicle, 0-based

    def __str__(self) -> str:
        if self.kind == "y":
            return f"y_{self.i}_{self.r}"
        return f"x_{self.i}_{self.j}_{self.r}"

    @classmethod
    def parse(cls, text: str) -> "VarRef":
        parts = text.split("_")
        if parts[0] == "y" and len(parts) == 3:
            return cls("y", int(parts[1]), -1, int(parts[2]))
        if parts[0] == "x" and len(parts) == 4:
            return cls("x", int(parts[1]), int(parts[2]), int(parts[3]))
        raise ValueError(f"bad variable name {text!r}")


def yv(i: int, r: int) -> VarRef:
    return VarRef("y", i, -1, r)


def xv(i: int, j: int, r: int) -> VarRef:
    return VarRef("x", i, j, r)


SENSES = ("<=", ">=", "=")


def _as_int(v: float) -> Optional[int]:
    if math.isfinite(v) and abs(v - round(v)) < 1e-12:
        return int(round(v))
    return None


class LinearRow(NamedTuple):
    terms: Tuple[Tuple[VarRef, float], ...]
    sense: str
    rhs: float
    kind: CutKind

    @classmethod
    def make(cls, terms: Iterable[Tuple[VarRef, float]], sense: str, rhs: float,
             kind: CutKind) -> "LinearRow":
        if sense not in SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        merged: Dict[VarRef, float] = {}
        for ref, coef in terms:
            if not math.isfinite(coef):
                raise ModelError(f"non-finite coefficient on {ref}")
            merged[ref] = merged.get(ref, 0.0) + coef
        items = sorted(
            ((ref, c) for ref, c in merged.items() if c != 0.0),
            key=lambda t: (t[0].kind, t[0].r, t[0].i, t[0].j),
        )
        rhs = float(rhs)
        ints = [_as_int(c) for _, c in items] + [_as_int(rhs)]
        if items and all(v is not None for v in ints):
            g = reduce(math.gcd, (abs(v) for v in ints))
            if g > 1:
                items = [(ref, c / g) for ref, c in items]
                rhs /= g
        return cls(tuple((ref, float(c)) for ref, c in items), sense, rhs, kind)

    def key(self):
        return (self.terms, self.sense, self.rhs)

    def activity(self, assignment: Mapping[VarRef, float]) -> float:
        return sum(c * assignment.get(ref, 0.0) for ref, c in self.terms)

    def satisfied(self, assignment: Mapping[VarRef, float], tol: float = EPS) -> bool:
        lhs = self.activity(assignment)
        if self.sense == "<=":
            return lhs <= self.rhs + tol
        if self.sense == ">=":
            return lhs >= self.rhs - tol
        return abs(lhs - self.rhs) <= tol

    def __str__(self) -> str:
        body = " ".join(f"{c!r}*{ref}" for ref, c in self.terms)
        return f"{self.kind.value} {self.sense} {self.rhs!r} : {body}"


OBJECTIVES = ("profit", "unit", "min_count")


class MipModel:
    """Objective, base rows and a deduplicated pool of typed rows."""

    def __init__(self, inst: Instance, mask: AccessibilityMask,
                 fleet: Optional[int] = None, objective: str = "profit") -> None:
        if objective not in OBJECTIVES:
            raise ModelError(f"unknown objective {objective!r}")
        self.instance = inst
        self.mask = mask
        self.fleet = inst.fleet_size if fleet is None else fleet
        self.objective_kind = objective
        customers = sorted(mask.accessible_customers)
        arcs = sorted(mask.accessible_arcs)
        # y columns first: the branching priority follows column classes
        self.columns: List[VarRef] = [yv(i, r) for r in range(self.fleet) for i in customers]
        self.columns += [xv(i, j, r) for r in range(self.fleet) for i, j in arcs]
        self.index: Dict[VarRef, int] = {ref: k for k, ref in enumerate(self.columns)}
        p = inst.profits
        coef = {"profit": lambda i: float(p[i]), "unit": lambda i: 1.0,
                "min_count": lambda i: -1.0}[objective]
        self.objective: List[Tuple[VarRef, float]] = [
            (ref, coef(ref.i)) for ref in self.columns if ref.kind == "y"
        ]
        self.branching_priority = {"y": 0, "x": 1}
        self.rows: List[LinearRow] = []
        self._keys: Dict[tuple, int] = {}
        self.fixed_zero: set = set()

    # -- variables --------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.columns)

    def knows(self, ref: VarRef) -> bool:
        if not 0 <= ref.r < self.fleet:
            return False
        if ref.kind == "y":
            return ref.i in self.instance.customers and ref.j == -1
        if ref.kind == "x":
            return self.instance.is_arc(ref.i, ref.j)
        return False

    def is_active(self, ref: VarRef) -> bool:
        return ref in self.index and ref not in self.fixed_zero

    def fix_zero(self, refs: Iterable[VarRef]) -> None:
        for ref in refs:
            if not self.knows(ref):
                raise ModelError(f"unknown variable {ref}")
            if ref in self.index:
                self.fixed_zero.add(ref)

    def remove_customer(self, i: int) -> None:
        """Fix every variable touching customer ``i`` to zero."""
        self.fix_zero(ref for ref in self.columns
                      if (ref.kind == "y" and ref.i == i)
                      or (ref.kind == "x" and i in (ref.i, ref.j)))

    # -- rows -------------------------------------------------------------
    def add_row(self, row: LinearRow) -> int:
        for ref, _ in row.terms:
            if not self.knows(ref):
                raise ModelError(f"row {row.kind.value} references unknown variable {ref}")
        key = row.key()
        if key in self._keys:
            return self._keys[key]
        if not row.terms:
            log.info("vacuous %s row: 0 %s %s", row.kind.value, row.sense, row.rhs)
        self.rows.append(row)
        self._keys[key] = len(self.rows) - 1
        return len(self.rows) - 1

    def add_rows(self, rows: Iterable[LinearRow]) -> List[int]:
        return [self.add_row(row) for row in rows]

    def count_by_kind(self) -> Dict[CutKind, int]:
        out: Dict[CutKind, int] = {}
        for row in self.rows:
            out[row.kind] = out.get(row.kind, 0) + 1
        return out

    # -- evaluation -------------------------------------------------------
    def objective_value(self, assignment: Mapping[VarRef, float]) -> float:
        return sum(c * assignment.get(ref, 0.0) for ref, c in self.objective)

    def violated_rows(self, assignment: Mapping[VarRef, float], tol: float = EPS) -> List[int]:
        bad = [k for k, row in enumerate(self.rows) if not row.satisfied(assignment, tol)]
        return bad

    def is_feasible(self, assignment: Mapping[VarRef, float], tol: float = EPS) -> bool:
        for ref, v in assignment.items():
            if abs(v) > tol and (ref not in self.index or ref in self.fixed_zero):
                return False
        return not self.violated_rows(assignment, tol)


def build_base(inst: Instance, mask: AccessibilityMask, fleet: Optional[int] = None,
               objective: str = "profit") -> MipModel:
    """Objective plus visit, depot-degree, flow-linking and length rows."""
    d, a, L = inst.depart, inst.arrive, inst.length_limit
    if inst.cost(d, a) > L + EPS:
        raise InfeasibleInstance(
            f"empty tour d->a has length {inst.cost(d, a):.6g} > L={L:.6g}")
    model = MipModel(inst, mask, fleet, objective)
    m = model.fleet
    customers = sorted(mask.accessible_customers)
    arcs = sorted(mask.accessible_arcs)
    out_arcs: Dict[int, List[int]] = {}
    in_arcs: Dict[int, List[int]] = {}
    for i, j in arcs:
        out_arcs.setdefault(i, []).append(j)
        in_arcs.setdefault(j, []).append(i)
    B = CutKind.BASE
    for i in customers:
        model.add_row(LinearRow.make([(yv(i, r), 1.0) for r in range(m)], "<=", 1, B))
    for r in range(m):
        model.add_row(LinearRow.make([(xv(d, j, r), 1.0) for j in out_arcs.get(d, [])], "=", 1, B))
        model.add_row(LinearRow.make([(xv(i, a, r), 1.0) for i in in_arcs.get(a, [])], "=", 1, B))
        for k in customers:
            out = [(xv(k, j, r), 1.0) for j in out_arcs.get(k, [])]
            inn = [(xv(i, k, r), 1.0) for i in in_arcs.get(k, [])]
            model.add_row(LinearRow.make(out + [(yv(k, r), -1.0)], "=", 0, B))
            model.add_row(LinearRow.make(inn + [(yv(k, r), -1.0)], "=", 0, B))
        model.add_row(LinearRow.make(
            [(xv(i, j, r), inst.cost(i, j)) for i, j in arcs], "<=", L, B))
    return model


def symmetry_rows(model: MipModel) -> List[LinearRow]:
    """Tour profits non-increasing in the vehicle index."""
    p = model.instance.profits
    customers = sorted(model.mask.accessible_customers)
    rows = []
    for r in range(model.fleet - 1):
        terms = [(yv(i, r + 1), float(p[i])) for i in customers]
        terms += [(yv(i, r), -float(p[i])) for i in customers]
        rows.append(LinearRow.make(terms, "<=", 0, CutKind.SYMMETRY))
    return rows


def add_symmetry_rows(model: MipModel) -> List[int]:
    return model.add_rows(symmetry_rows(model))


def pin_inaccessible(model: MipModel, mask: AccessibilityMask) -> List[int]:
    inst = model.instance
    m = model.fleet
    ids = []
    for i in inst.customers:
        if i not in mask.accessible_customers:
            row = LinearRow.make([(yv(i, r), 1.0) for r in range(m)], "=", 0, CutKind.INACCESSIBLE)
            ids.append(model.add_row(row))
    n = len(inst.vertices)
    for i in range(n):
        for j in range(n):
            if inst.is_arc(i, j) and (i, j) not in mask.accessible_arcs:
                row = LinearRow.make([(xv(i, j, r), 1.0) for r in range(m)], "=", 0,
                                     CutKind.INACCESSIBLE)
                ids.append(model.add_row(row))
    return ids


# -- assignments ----------------------------------------------------------

def tours_to_assignment(tours: Sequence[Sequence[int]]) -> Dict[VarRef, float]:
    """0/1 assignment of a list of ``d ... a`` vertex sequences (vehicle = index)."""
    out: Dict[VarRef, float] = {}
    for r, tour in enumerate(tours):
        for v in tour[1:-1]:
            out[yv(v, r)] = 1.0
        for u, v in zip(tour, tour[1:]):
            out[xv(u, v, r)] = 1.0
    return out


# -- pool serialization ---------------------------------------------------

def dump_rows(rows: Iterable[LinearRow]) -> str:
    return "".join(f"{row}\n" for row in rows)


def parse_rows(text: str) -> List[LinearRow]:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        head, _, body = line.partition(":")
        try:
            kind, sense, rhs = head.split()
            terms = []
            for tok in body.split():
                coef, _, name = tok.partition("*")
                terms.append((VarRef.parse(name), float(coef)))
            rows.append(LinearRow(tuple(terms), sense, float(rhs), CutKind(kind)))
        except ValueError as exc:
            raise ModelError(f"line {lineno}: {exc}") from None
    return rows
