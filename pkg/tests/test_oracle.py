import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from topcut.instance import Instance
from topcut.oracle import OracleLimitError, enumerate_feasible, solve_exact
from topcut.primal import Solution, validate_solution

from conftest import random_instance


def permutation_optimum(inst):
    """Slow reference: label each customer with a vehicle (or none), then
    try every order inside every vehicle."""
    c = inst.costs
    d, a, L = inst.depart, inst.arrive, inst.length_limit
    custs = list(inst.customers)
    m = inst.fleet_size
    best = 0

    def fits(group):
        for order in itertools.permutations(group):
            path = (d, *order, a)
            if sum(c[u, v] for u, v in zip(path, path[1:])) <= L + 1e-6:
                return True
        return False

    for labels in itertools.product(range(m + 1), repeat=len(custs)):
        groups = [[v for v, lab in zip(custs, labels) if lab == r + 1] for r in range(m)]
        value = sum(inst.profits[v] for g in groups for v in g)
        if value > best and all(fits(g) for g in groups):
            best = value
    return best


def test_no_customers():
    inst = Instance.from_points([(0, 0, 0), (1, 0, 0)], 2, 3)
    res = solve_exact(inst)
    assert res.optimum == 0 and len(res.optimal_solutions) == 1


def test_one_customer():
    inst = Instance.from_points([(0, 0, 0), (1, 1, 7), (0, 0, 0)], 1, 5)
    res = solve_exact(inst)
    assert res.optimum == 7
    assert [s.tours for s in res.optimal_solutions] == [((0, 1, 2),)]


def test_three_on_a_line():
    # depot pair at 0, customers at 1, 2, 3 with profits 4, 6, 5; L=4 reaches
    # x=2 and back, so the tour holds {1,2}; L=6 would take all three
    pts = [(0, 0, 0), (1, 0, 4), (2, 0, 6), (3, 0, 5), (0, 0, 0)]
    inst = Instance.from_points(pts, 1, 4)
    assert solve_exact(inst).optimum == 10
    assert solve_exact(Instance.from_points(pts, 1, 6)).optimum == 15
    # two vehicles at L=4: {1,2} plus nothing else reachable alone beyond x=2
    assert solve_exact(Instance.from_points(pts, 2, 4)).optimum == 10


def test_guards():
    pts = [(0, 0, 0)] + [(k, 0, 1) for k in range(13)] + [(0, 0, 0)]
    with pytest.raises(OracleLimitError):
        solve_exact(Instance.from_points(pts, 1, 100))
    with pytest.raises(OracleLimitError):
        solve_exact(Instance.from_points(pts[:4] + pts[-1:], 4, 100))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_matches_permutation_reference(seed):
    inst = random_instance(random.Random(seed), n_max=5)
    assert solve_exact(inst).optimum == permutation_optimum(inst)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_optimal_solutions_are_feasible_and_complete(seed):
    inst = random_instance(random.Random(seed), n_max=6)
    res = solve_exact(inst)
    for sol in res.optimal_solutions:
        s = Solution.of(inst, sol.tours)
        assert s.profit == res.optimum == sol.profit
        assert not validate_solution(inst, s)
    everything = enumerate_feasible(inst, max_customers=6, limit=100_000)
    assert max(s.profit for s in everything) == res.optimum
    opt_sets = {frozenset(frozenset(t[1:-1]) for t in s.tours) for s in everything
                if s.profit == res.optimum}
    found = {frozenset(frozenset(t[1:-1]) for t in s.tours) for s in res.optimal_solutions}
    assert opt_sets == found


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_invariances(seed):
    rng = random.Random(seed)
    inst = random_instance(rng, n_max=7, fleets=(1, 2))
    base = solve_exact(inst).optimum
    pts = [(v.x, v.y, v.profit) for v in inst.vertices]
    inner = pts[1:-1]
    rng.shuffle(inner)
    relabelled = Instance.from_points([pts[0]] + inner + [pts[-1]], inst.fleet_size, inst.length_limit)
    assert solve_exact(relabelled).optimum == base
    more = Instance.from_points(pts, inst.fleet_size + 1, inst.length_limit)
    assert solve_exact(more).optimum >= base
    longer = Instance.from_points(pts, inst.fleet_size, inst.length_limit + rng.uniform(0, 3))
    assert solve_exact(longer).optimum >= base
