import math
import random
from pathlib import Path

import numpy as np
import pytest

from topcut.backend import compile_rows
from topcut.instance import Instance
from topcut.model import tours_to_assignment

DATA = Path(__file__).parent / "data"


def random_instance(rng: random.Random, n_max: int = 10, fleets=(1, 2, 3)) -> Instance:
    """Customers uniform in a square around the depot pair, profits 1-10,
    L drawn between "almost nothing reachable" and "most things reachable"."""
    n = rng.randint(0, n_max)
    pts = [(0.0, 0.0, 0)]
    pts += [(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.randint(1, 10)) for _ in range(n)]
    pts.append((rng.uniform(-1, 1), rng.uniform(-1, 1), 0))
    m = rng.choice(fleets)
    c_da = math.dist(pts[0][:2], pts[-1][:2])
    L = c_da + rng.uniform(0.0, 16.0)
    return Instance.from_points(pts, m, round(L, 3), name=f"rand{n}")


def ring_instance(rng: random.Random, n_max: int = 10, fleets=(1, 2, 3)) -> Instance:
    """Tight clusters on a ring around the depots.  Serving a cluster means a
    long out-and-back trip, so relaxations like to close cheap cycles inside a
    cluster instead: these instances reliably produce subtours."""
    n = rng.randint(4, n_max)
    m = rng.choice(fleets)
    R = rng.uniform(4, 8)
    k = rng.randint(m + 1, m + 3)
    angles = [2 * math.pi * c / k + rng.uniform(-0.2, 0.2) for c in range(k)]
    pts = [(0.0, 0.0, 0)]
    for v in range(n):
        a = angles[v % k]
        r = R * rng.uniform(0.95, 1.05)
        pts.append((r * math.cos(a) + rng.uniform(-0.3, 0.3),
                    r * math.sin(a) + rng.uniform(-0.3, 0.3), rng.randint(1, 10)))
    pts.append((0.2, 0.0, 0))
    return Instance.from_points(pts, m, round(2 * R + rng.uniform(0.5, 2.5), 3), name=f"ring{n}")


def row_matrix(model, rows):
    """Rows as (A, lo, hi) over the model's columns, for vectorised checks."""
    A, lo, hi, bad, _ = compile_rows(model, rows)
    assert not bad, "a row without active variables is violated at zero"
    return A, lo, hi


def solution_matrix(model, tour_sets):
    """One column per solution; variables outside the model must be unused."""
    X = np.zeros((model.n_vars, len(tour_sets)))
    for k, tours in enumerate(tour_sets):
        for ref, v in tours_to_assignment(tours).items():
            assert ref in model.index, f"{ref} is not a model column"
            X[model.index[ref], k] = v
    return X


def violations(A, lo, hi, X, tol=1e-6):
    """Boolean matrix rows x solutions of violated rows."""
    act = A @ X
    return (act < lo[:, None] - tol) | (act > hi[:, None] + tol)


@pytest.fixture
def rng():
    return random.Random(12345)
