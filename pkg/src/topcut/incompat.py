"""Customer and arc incompatibility graphs, cliques, alpha bounds and their cuts.

An edge says the two endpoints never share a tour in an optimal solution.
Initial edges come from the two-element shortest path exceeding ``L``;
the engine may add more by probing forced-pair models.  Cliques give
"at most one per tour" rows, and clique partitions of each neighbourhood
bound its independence number for the independent-set rows.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, FrozenSet, Hashable, Iterable, List, Optional, Sequence, Set, Tuple

from .instance import EPS, AccessibilityMask, Instance, min_len
from .model import CutKind, LinearRow, VarRef, xv, yv

log = logging.getLogger(__name__)

Node = Hashable  # customer id or (i, j) arc


@dataclass
class IncompatGraph:
    kind: str  # "customer" or "arc"
    nodes: List[Node]
    adj: Dict[Node, Set[Node]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for v in self.nodes:
            self.adj.setdefault(v, set())

    def add_edge(self, u: Node, v: Node) -> bool:
        if u == v or u not in self.adj or v not in self.adj:
            raise KeyError(f"bad edge {u!r}-{v!r}")
        if v in self.adj[u]:
            return False
        self.adj[u].add(v)
        self.adj[v].add(u)
        return True

    def has_edge(self, u: Node, v: Node) -> bool:
        return v in self.adj.get(u, ())

    def neighbors(self, v: Node) -> Set[Node]:
        return self.adj[v]

    def edges(self) -> List[Tuple[Node, Node]]:
        pos = {v: k for k, v in enumerate(self.nodes)}
        return sorted((u, v) for u in self.nodes for v in self.adj[u] if pos[u] < pos[v])

    @property
    def n_edges(self) -> int:
        return sum(len(s) for s in self.adj.values()) // 2

    def induced(self, keep: Iterable[Node]) -> "IncompatGraph":
        keep = set(keep)
        nodes = [v for v in self.nodes if v in keep]
        return IncompatGraph(self.kind, nodes, {v: self.adj[v] & keep for v in nodes})

    def copy(self) -> "IncompatGraph":
        return IncompatGraph(self.kind, list(self.nodes), {v: set(s) for v, s in self.adj.items()})

    # -- edge-list serialization ----------------------------------------
    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "nodes": [_enc(v) for v in self.nodes],
                           "edges": [[_enc(u), _enc(v)] for u, v in self.edges()]})

    @classmethod
    def from_json(cls, text: str) -> "IncompatGraph":
        data = json.loads(text)
        g = cls(data["kind"], [_dec(v) for v in data["nodes"]])
        for u, v in data["edges"]:
            g.add_edge(_dec(u), _dec(v))
        return g


def _enc(v):
    return list(v) if isinstance(v, tuple) else v


def _dec(v):
    return tuple(v) if isinstance(v, list) else v


# -- initialization ---------------------------------------------------------

def init_customer_graph(inst: Instance, mask: AccessibilityMask) -> IncompatGraph:
    nodes = sorted(mask.accessible_customers)
    g = IncompatGraph("customer", nodes)
    L = inst.length_limit
    for k, i in enumerate(nodes):
        for j in nodes[k + 1:]:
            if min_len(inst, (i, j)) > L + EPS:
                g.add_edge(i, j)
    return g


def init_arc_graph(inst: Instance, mask: AccessibilityMask) -> IncompatGraph:
    nodes = sorted(mask.accessible_arcs)
    g = IncompatGraph("arc", nodes)
    L = inst.length_limit
    for k, e in enumerate(nodes):
        for f in nodes[k + 1:]:
            if min_len(inst, (e, f)) > L + EPS:
                g.add_edge(e, f)
    return g


def init_graphs(inst: Instance, mask: AccessibilityMask,
                cache_dir: Optional[Path] = None) -> Tuple[IncompatGraph, IncompatGraph]:
    """Initial graphs, read from / written to ``cache_dir`` keyed by content hash."""
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"incompat-{inst.content_hash()}.json"
        if path.exists():
            try:
                data = json.loads(path.read_text())
                return IncompatGraph.from_json(data["customer"]), IncompatGraph.from_json(data["arc"])
            except (ValueError, KeyError) as exc:
                log.warning("ignoring unreadable graph cache %s: %s", path, exc)
    gc = init_customer_graph(inst, mask)
    ga = init_arc_graph(inst, mask)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({"customer": gc.to_json(), "arc": ga.to_json()}))
    return gc, ga


# -- enhancement ------------------------------------------------------------

def enhance_graph(graph: IncompatGraph, candidates: Sequence[Tuple[Node, Node]],
                  probe: Callable[[Node, Node, float], Optional[bool]],
                  deadline: float) -> int:
    """Probe candidate pairs in order until ``deadline``.

    ``probe(u, v, deadline)`` returns True when the pair is certified
    incompatible, False when it is not, and None when the probe failed.
    Returns the number of edges added.
    """
    added = 0
    for u, v in candidates:
        if time.monotonic() >= deadline:
            break
        if graph.has_edge(u, v):
            continue
        try:
            verdict = probe(u, v, deadline)
        except Exception as exc:  # a failed probe only loses that pair
            log.warning("probe %r~%r failed: %s", u, v, exc)
            continue
        if verdict:
            added += graph.add_edge(u, v)
    return added


def customer_candidates(inst: Instance, graph: IncompatGraph) -> List[Tuple[int, int]]:
    """Non-adjacent customer pairs, tightest first (smallest ``L - MinLen``)."""
    L = inst.length_limit
    pairs = [(u, v) for k, u in enumerate(graph.nodes) for v in graph.nodes[k + 1:]
             if not graph.has_edge(u, v)]
    return sorted(pairs, key=lambda p: (L - min_len(inst, p), p))


def arc_candidates(inst: Instance, graph: IncompatGraph,
                   focus: Iterable[Tuple[int, int]]) -> List[Tuple[Tuple[int, int], Tuple[int, int]]]:
    """Non-adjacent arc pairs with both arcs in ``focus``, tightest first."""
    L = inst.length_limit
    arcs = sorted(set(focus) & set(graph.nodes))
    pairs = [(e, f) for k, e in enumerate(arcs) for f in arcs[k + 1:] if not graph.has_edge(e, f)]
    return sorted(pairs, key=lambda p: (L - min_len(inst, p), p))


# -- cliques ------------------------------------------------------------------

class _Bits:
    """Adjacency as integer bitsets over the graph's node order."""

    def __init__(self, graph: IncompatGraph, nodes: Optional[Sequence[Node]] = None):
        self.nodes = list(graph.nodes if nodes is None else nodes)
        self.pos = {v: k for k, v in enumerate(self.nodes)}
        pos = self.pos
        self.adj = []
        for v in self.nodes:
            m = 0
            for u in graph.adj[v]:
                k = pos.get(u)
                if k is not None:
                    m |= 1 << k
            self.adj.append(m)

    def mask(self, nodes: Iterable[Node]) -> int:
        m = 0
        for v in nodes:
            m |= 1 << self.pos[v]
        return m

    def grow(self, clique: List[int], cand: int) -> List[int]:
        """Greedy extension: add the candidate with most neighbours among candidates."""
        adj = self.adj
        while cand:
            best, best_deg = -1, -1
            rest = cand
            while rest:
                low = rest & -rest
                k = low.bit_length() - 1
                rest ^= low
                deg = (adj[k] & cand).bit_count()
                if deg > best_deg:
                    best, best_deg = k, deg
            clique.append(best)
            cand &= adj[best]
        return clique

    def swap_improve(self, clique: List[int], fixed: int) -> List[int]:
        """Drop one member (not ``fixed``) when that lets two or more outsiders in."""
        adj = self.adj
        improved = True
        while improved:
            improved = False
            members = 0
            for k in clique:
                members |= 1 << k
            for out in clique:
                if out == fixed:
                    continue
                common = -1
                for k in clique:
                    if k != out:
                        common &= adj[k]
                common &= ~members
                if common.bit_count() < 2:
                    continue
                trial = self.grow([k for k in clique if k != out], common)
                if len(trial) > len(clique):
                    clique = trial
                    improved = True
                    break
        return clique


def find_cliques(graph: IncompatGraph, seeds: Optional[Iterable[Node]] = None,
                 min_size: int = 2) -> List[FrozenSet[Node]]:
    """One large maximal clique per seed (default: every node), deduplicated."""
    seeds = graph.nodes if seeds is None else [v for v in graph.nodes if v in set(seeds)]
    bits = _Bits(graph)
    out: List[FrozenSet[Node]] = []
    seen = set()
    for s in seeds:
        k = bits.pos[s]
        if not bits.adj[k]:
            continue
        clique = bits.swap_improve(bits.grow([k], bits.adj[k]), k)
        key = frozenset(bits.nodes[i] for i in clique)
        if len(key) >= min_size and key not in seen:
            seen.add(key)
            out.append(key)
    return out


def is_clique(graph: IncompatGraph, nodes: Iterable[Node]) -> bool:
    nodes = list(nodes)
    return all(graph.has_edge(u, v) for k, u in enumerate(nodes) for v in nodes[k + 1:])


def is_maximal_clique(graph: IncompatGraph, nodes: Iterable[Node]) -> bool:
    nodes = set(nodes)
    if not is_clique(graph, nodes):
        return False
    return not any(nodes <= graph.adj[v] for v in graph.nodes if v not in nodes)


# -- alpha bounds ---------------------------------------------------------------

@dataclass(frozen=True)
class AlphaBound:
    node: Node
    neighborhood: FrozenSet[Node]
    alpha: int
    partition: Tuple[FrozenSet[Node], ...]  # disjoint cliques covering the neighbourhood


def clique_partition(graph: IncompatGraph, nodes: Iterable[Node],
                     _bits: Optional[_Bits] = None) -> List[FrozenSet[Node]]:
    bits = _Bits(graph) if _bits is None else _bits
    left = bits.mask(nodes)
    adj = bits.adj
    parts = []
    while left:
        seed, seed_deg = -1, -1
        rest = left
        while rest:
            low = rest & -rest
            k = low.bit_length() - 1
            rest ^= low
            deg = (adj[k] & left).bit_count()
            if deg > seed_deg:
                seed, seed_deg = k, deg
        clique = bits.grow([seed], adj[seed] & left)
        parts.append(frozenset(bits.nodes[k] for k in clique))
        for k in clique:
            left &= ~(1 << k)
    return parts


def alpha_bounds(graph: IncompatGraph) -> List[AlphaBound]:
    bits = _Bits(graph)
    out = []
    for v in graph.nodes:
        nb = graph.adj[v]
        if not nb:
            continue
        parts = clique_partition(graph, nb, bits)
        out.append(AlphaBound(v, frozenset(nb), len(parts), tuple(parts)))
    return out


def max_independent_set_size(graph: IncompatGraph, nodes: Iterable[Node]) -> int:
    """Exact, by branching on a vertex; for small reference checks."""
    sub = graph.induced(nodes)

    def rec(cand: FrozenSet[Node]) -> int:
        if not cand:
            return 0
        v = max(cand, key=lambda u: len(sub.adj[u] & cand))
        if not sub.adj[v] & cand:
            return len(cand)
        return max(rec(cand - {v}), 1 + rec(cand - {v} - sub.adj[v]))

    return rec(frozenset(sub.nodes))


# -- rows ------------------------------------------------------------------------

def _var(kind: str, node: Node, r: int) -> VarRef:
    return yv(node, r) if kind == "customer" else xv(node[0], node[1], r)


def emit_clique_cuts(cliques: Iterable[FrozenSet[Node]], kind: str, fleet: int) -> List[LinearRow]:
    rows = []
    for clique in cliques:
        if len(clique) < 2:
            continue
        members = sorted(clique)
        for r in range(fleet):
            rows.append(LinearRow.make([(_var(kind, v, r), 1.0) for v in members], "<=", 1,
                                       CutKind.CLIQUE))
    return rows


def emit_indepset_cuts(bounds: Iterable[AlphaBound], kind: str, fleet: int) -> List[LinearRow]:
    rows = []
    for b in bounds:
        if b.alpha >= len(b.neighborhood):
            continue
        for r in range(fleet):
            terms = [(_var(kind, b.node, r), float(b.alpha))]
            terms += [(_var(kind, v, r), 1.0) for v in sorted(b.neighborhood)]
            rows.append(LinearRow.make(terms, "<=", b.alpha, CutKind.INDEP_SET))
    return rows
