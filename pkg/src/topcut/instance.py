"""TOP instances: loading, validation and accessibility preprocessing.

Vertex 0 is the departure depot ``d`` and the last vertex is the arrival
depot ``a``; everything in between is a customer.  Costs are Euclidean and
kept as floats; every comparison against the length limit goes through
:data:`EPS`.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from itertools import permutations
from pathlib import Path
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

EPS = 1e-6
METRIC_TOL = 1e-9

Arc = Tuple[int, int]


class ParseError(ValueError):
    """Raised for malformed instance text; the message names the line."""


class InvalidInstance(ValueError):
    pass


@dataclass(frozen=True)
class Vertex:
    id: int
    x: float
    y: float
    profit: int = 0


@dataclass(frozen=True, eq=False)
class Instance:
    vertices: Tuple[Vertex, ...]
    fleet_size: int
    length_limit: float
    costs: np.ndarray = field(repr=False)
    name: str = ""

    def __post_init__(self) -> None:
        n = len(self.vertices)
        if n < 2:
            raise InvalidInstance("an instance needs at least the two depots")
        if [v.id for v in self.vertices] != list(range(n)):
            raise InvalidInstance("vertex ids must be contiguous from 0")
        if self.fleet_size < 1:
            raise InvalidInstance("fleet size must be >= 1")
        if self.length_limit < 0:
            raise InvalidInstance("length limit must be nonnegative")
        if self.vertices[0].profit != 0 or self.vertices[-1].profit != 0:
            raise InvalidInstance("depots must carry zero profit")
        if any(v.profit < 0 for v in self.vertices):
            raise InvalidInstance("profits must be nonnegative")
        c = np.asarray(self.costs, dtype=float)
        if c.shape != (n, n):
            raise InvalidInstance(f"cost matrix must be {n}x{n}")
        if np.any(c < 0) or np.any(np.abs(c - c.T) > METRIC_TOL):
            raise InvalidInstance("costs must be nonnegative and symmetric")
        for k in range(n):
            if np.any(c - (c[:, k, None] + c[None, k, :]) > METRIC_TOL):
                raise InvalidInstance("costs violate the triangle inequality")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "costs", c)

    @classmethod
    def from_points(
        cls,
        points: Sequence[Tuple[float, float, int]],
        fleet_size: int,
        length_limit: float,
        name: str = "",
    ) -> "Instance":
        """Build an instance from ``(x, y, profit)`` rows, depots first and last."""
        vertices = tuple(
            Vertex(k, float(x), float(y), int(p)) for k, (x, y, p) in enumerate(points)
        )
        xy = np.array([[v.x, v.y] for v in vertices], dtype=float).reshape(-1, 2)
        diff = xy[:, None, :] - xy[None, :, :]
        costs = np.sqrt((diff ** 2).sum(axis=2))
        return cls(vertices, int(fleet_size), float(length_limit), costs, name)

    # -- vertex sets ----------------------------------------------------
    @property
    def depart(self) -> int:
        return 0

    @property
    def arrive(self) -> int:
        return len(self.vertices) - 1

    @property
    def n_customers(self) -> int:
        return len(self.vertices) - 2

    @property
    def customers(self) -> range:
        return range(1, len(self.vertices) - 1)

    @cached_property
    def profits(self) -> Tuple[int, ...]:
        return tuple(v.profit for v in self.vertices)

    def cost(self, i: int, j: int) -> float:
        return float(self.costs[i, j])

    def is_arc(self, i: int, j: int) -> bool:
        """Arcs of the complete digraph minus those entering d or leaving a."""
        n = len(self.vertices)
        return (
            0 <= i < n and 0 <= j < n and i != j
            and j != self.depart and i != self.arrive
        )

    def path_length(self, path: Sequence[int]) -> float:
        return float(sum(self.costs[u, v] for u, v in zip(path, path[1:])))

    def with_fleet(self, fleet_size: int) -> "Instance":
        return Instance(self.vertices, fleet_size, self.length_limit, self.costs, self.name)

    def content_hash(self) -> str:
        return hashlib.sha256(dump_chao(self).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class AccessibilityMask:
    accessible_customers: frozenset
    accessible_arcs: frozenset

    @property
    def n_prime(self) -> int:
        return len(self.accessible_customers)


def accessibility(inst: Instance) -> AccessibilityMask:
    """Customers and arcs that fit in a single ``d -> ... -> a`` tour."""
    d, a, L = inst.depart, inst.arrive, inst.length_limit
    c = inst.costs
    customers = frozenset(
        i for i in inst.customers if c[d, i] + c[i, a] <= L + EPS
    )
    # depots count as accessible endpoints only if the empty tour fits
    ends = set(customers)
    if c[d, a] <= L + EPS:
        ends |= {d, a}
    arcs = frozenset(
        (i, j)
        for i in ends
        for j in ends
        if inst.is_arc(i, j) and c[d, i] + c[i, j] + c[j, a] <= L + EPS
    )
    return AccessibilityMask(customers, arcs)


def _arc_chain(inst: Instance, first: Arc, second: Arc):
    """Vertex sequence ``d, first, second, a`` with shared ends collapsed,
    or None when it would revisit a vertex."""
    raw = [inst.depart, *first, *second, inst.arrive]
    seq = [raw[0]]
    for v in raw[1:]:
        if v != seq[-1]:
            seq.append(v)
    if len(set(seq)) != len(seq):
        return None
    pairs = set(zip(seq, seq[1:]))
    if first not in pairs or second not in pairs:
        return None
    return seq


def min_len(inst: Instance, pair: Iterable) -> float:
    """Shortest ``d -> a`` path covering two customers or two arcs.

    Arc pairs that cannot sit on one simple path give ``inf``.
    """
    s, t = tuple(pair)
    c = inst.costs
    d, a = inst.depart, inst.arrive
    if isinstance(s, tuple):
        best = math.inf
        for first, second in ((s, t), (t, s)):
            seq = _arc_chain(inst, first, second)
            if seq is not None:
                best = min(best, inst.path_length(seq))
        return best
    if s == t:
        raise ValueError("min_len needs two distinct customers")
    return float(min(c[d, s] + c[s, t] + c[t, a], c[d, t] + c[t, s] + c[s, a]))


def min_len_bruteforce(inst: Instance, pair: Iterable) -> float:
    """Enumerate every ordering of the involved vertices (reference check)."""
    s, t = tuple(pair)
    d, a = inst.depart, inst.arrive
    if isinstance(s, tuple):
        needed = {s, t}
        inner = sorted({*s, *t} - {d, a})
    else:
        needed = set()
        inner = [s, t]
    best = math.inf
    for order in permutations(inner):
        seq = [d, *order, a]
        if needed <= set(zip(seq, seq[1:])):
            best = min(best, inst.path_length(seq))
    return best


# -- Chao text format ---------------------------------------------------

_HEADER = {"n": int, "m": int, "tmax": float}
_STEM = re.compile(r"^p(?P<set>\d+)\.(?P<m>\d+)\.(?P<letter>[a-z]+)$", re.I)


def parse_chao(text: Union[str, Iterable[str]], name: str = "") -> Instance:
    """Parse ``n``/``m``/``tmax`` header lines followed by ``x y profit`` rows.

    ``n`` counts every row, both depots included.
    """
    lines = text.splitlines() if isinstance(text, str) else list(text)
    header: dict = {}
    rows = []
    body_start = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(header) < 3:
            key = parts[0].lower()
            if key not in _HEADER or len(parts) != 2:
                raise ParseError(f"line {lineno}: expected header 'n', 'm' or 'tmax', got {line!r}")
            if key in header:
                raise ParseError(f"line {lineno}: duplicate header {key!r}")
            try:
                header[key] = _HEADER[key](parts[1])
            except ValueError:
                raise ParseError(f"line {lineno}: bad value for {key!r}: {parts[1]!r}") from None
            continue
        if body_start is None:
            body_start = lineno
        if len(parts) != 3:
            raise ParseError(f"line {lineno}: expected 'x y profit', got {line!r}")
        try:
            x, y, p = (float(v) for v in parts)
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric row {line!r}") from None
        if p < 0:
            raise ParseError(f"line {lineno}: negative profit {p}")
        if p != int(p):
            raise ParseError(f"line {lineno}: profit {p} is not integral")
        rows.append((lineno, x, y, int(p)))
    if len(header) < 3:
        raise ParseError(f"line {len(lines)}: incomplete header, have {sorted(header)}")
    n = header["n"]
    if n < 2:
        raise ParseError("line 1: n must count both depots (>= 2)")
    if len(rows) != n:
        where = rows[-1][0] if rows else len(lines)
        raise ParseError(f"line {where}: header says n={n} but found {len(rows)} vertex rows")
    for lineno, _, _, p in (rows[0], rows[-1]):
        if p != 0:
            raise ParseError(f"line {lineno}: depot row must have zero profit")
    if header["m"] < 1:
        raise ParseError("line 2: m must be >= 1")
    return Instance.from_points(
        [(x, y, p) for _, x, y, p in rows], header["m"], header["tmax"], name
    )


def dump_chao(inst: Instance) -> str:
    out = [f"n {len(inst.vertices)}", f"m {inst.fleet_size}", f"tmax {inst.length_limit!r}"]
    out += [f"{v.x!r}\t{v.y!r}\t{v.profit}" for v in inst.vertices]
    return "\n".join(out) + "\n"


def load_instance(path: Union[str, Path]) -> Instance:
    path = Path(path)
    return parse_chao(path.read_text(), name=instance_name(path))


def instance_name(path: Union[str, Path]) -> str:
    name = Path(path).name
    for suffix in (".txt", ".top", ".dat"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return name


def data_set_of(name: str) -> str:
    """``p2.3.k`` -> ``"2"``; anything else is grouped under its own stem."""
    m = _STEM.match(name)
    return m.group("set") if m else name.split(".")[0]
