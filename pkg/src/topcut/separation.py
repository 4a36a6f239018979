"""Subtour detection on integer points and the generalized subtour cuts.

Subtours are strongly connected components (Tarjan) of a vehicle's arc
graph that have at least two vertices and avoid both depots.  For a subtour
``U`` with ``S = V \\ U`` three cut families are produced, each for every
vehicle:

* crossing form: ``x(delta(S)) >= 2 y_i`` for each ``i`` in ``U``;
* complement form: ``x(gamma(S)) <= sum_{S minus depots} y - y_j + 1``;
* interior form: ``x(gamma(U)) <= sum_U y - y_j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Mapping, Sequence, Tuple

from .instance import Instance
from .model import CutKind, LinearRow, MipModel, VarRef, xv, yv


class SeparationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Subtour:
    vehicle: int
    vertices: FrozenSet[int]


def tarjan_scc(nodes: Sequence[int], succ: Mapping[int, Sequence[int]]) -> List[List[int]]:
    """Strongly connected components, iterative Tarjan."""
    index: Dict[int, int] = {}
    low: Dict[int, int] = {}
    on_stack = set()
    stack: List[int] = []
    out: List[List[int]] = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(succ.get(root, ())))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ.get(w, ()))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


def vehicle_arcs(assignment: Mapping[VarRef, float]) -> Dict[int, List[Tuple[int, int]]]:
    arcs: Dict[int, List[Tuple[int, int]]] = {}
    for ref, v in assignment.items():
        if ref.kind == "x" and v > 0.5:
            arcs.setdefault(ref.r, []).append((ref.i, ref.j))
    return arcs


def find_subtours(inst: Instance, assignment: Mapping[VarRef, float]) -> List[Subtour]:
    d, a = inst.depart, inst.arrive
    found = []
    for r, arcs in sorted(vehicle_arcs(assignment).items()):
        succ: Dict[int, List[int]] = {}
        for i, j in sorted(arcs):
            succ.setdefault(i, []).append(j)
        nodes = sorted({v for arc in arcs for v in arc})
        for comp in tarjan_scc(nodes, succ):
            if len(comp) >= 2 and d not in comp and a not in comp:
                found.append(Subtour(r, frozenset(comp)))
    return found


def extract_tours(inst: Instance, assignment: Mapping[VarRef, float], fleet: int) -> List[List[int]]:
    """The ``d -> a`` path of each vehicle; cycles off the path are dropped."""
    d, a = inst.depart, inst.arrive
    arcs = vehicle_arcs(assignment)
    tours = []
    for r in range(fleet):
        nxt = dict(arcs.get(r, []))
        path = [d]
        seen = {d}
        while path[-1] != a:
            v = nxt.get(path[-1])
            if v is None or v in seen:
                raise SeparationError(f"vehicle {r}: no simple d->a path in the assignment")
            path.append(v)
            seen.add(v)
        tours.append(path)
    return tours


def emit_gsecs(sub: Subtour, model: MipModel) -> List[LinearRow]:
    inst = model.instance
    d, a = inst.depart, inst.arrive
    U = set(sub.vertices)
    if not U:
        raise SeparationError("empty subtour")
    if d in U or a in U:
        raise SeparationError(f"subtour {sorted(U)} contains a depot")
    n = len(inst.vertices)
    S = [v for v in range(n) if v not in U]
    S_cust = [v for v in S if v not in (d, a)]
    rows = []
    for r in range(model.fleet):
        crossing = [(xv(i, j, r), 1.0) for i in S for j in U if inst.is_arc(i, j)]
        crossing += [(xv(j, i, r), 1.0) for i in S for j in U if inst.is_arc(j, i)]
        inside_S = [(xv(i, j, r), 1.0) for i in S for j in S if inst.is_arc(i, j)]
        inside_U = [(xv(i, j, r), 1.0) for i in sorted(U) for j in sorted(U) if i != j]
        y_S = [(yv(i, r), -1.0) for i in S_cust]
        y_U = [(yv(i, r), -1.0) for i in sorted(U)]
        for i in sorted(U):
            rows.append(LinearRow.make(crossing + [(yv(i, r), -2.0)], ">=", 0, CutKind.GSEC))
            rows.append(LinearRow.make(inside_S + y_S + [(yv(i, r), 1.0)], "<=", 1,
                                       CutKind.GSEC_GAMMA))
            rows.append(LinearRow.make(inside_U + y_U + [(yv(i, r), 1.0)], "<=", 0,
                                       CutKind.GSEC_GAMMA))
    return rows


def emit_plain_secs(sub: Subtour, model: MipModel) -> List[LinearRow]:
    """Weak fallback used when generalized cuts are disabled:
    ``x(gamma(U)) <= |U| - 1`` on every vehicle."""
    U = sorted(sub.vertices)
    rows = []
    for r in range(model.fleet):
        terms = [(xv(i, j, r), 1.0) for i in U for j in U if i != j]
        rows.append(LinearRow.make(terms, "<=", len(U) - 1, CutKind.GSEC))
    return rows

