import random

import pytest
from hypothesis import given, settings, strategies as st

from topcut.instance import Instance
from topcut.model import InfeasibleInstance
from topcut.oracle import solve_exact
from topcut.primal import Solution, construct, improve, validate_solution

from conftest import random_instance


def test_no_customers():
    inst = Instance.from_points([(0, 0, 0), (1, 0, 0)], 3, 2)
    sol = construct(inst)
    assert sol.profit == 0 and sol.tours == ((0, 1),) * 3


def test_single_reachable_customer():
    inst = Instance.from_points([(0, 0, 0), (1, 1, 7), (0, 0, 0)], 1, 5)
    assert construct(inst).profit == 7


def test_empty_tour_too_long():
    inst = Instance.from_points([(0, 0, 0), (1, 1, 7), (9, 0, 0)], 1, 5)
    with pytest.raises(InfeasibleInstance):
        construct(inst)


def test_improve_inserts_a_free_customer():
    inst = Instance.from_points([(0, 0, 0), (1, 0, 4), (2, 0, 6), (0, 0, 0)], 1, 10)
    start = Solution.of(inst, [(0, 1, 3)])
    better = improve(inst, start, budget=0.2)
    assert better.profit == 10
    assert not validate_solution(inst, better)


def test_improve_keeps_an_optimum():
    inst = Instance.from_points([(0, 0, 0), (3, 0, 5), (-3, 0, 7), (0, 0, 0)], 1, 7)
    best = Solution.of(inst, [(0, 2, 3)])
    assert improve(inst, best, budget=0.1).profit == 7


def test_validator_catches_problems():
    inst = Instance.from_points([(0, 0, 0), (3, 0, 5), (-3, 0, 7), (0, 0, 0)], 2, 7)
    bad = Solution(((0, 1, 2, 3), (0, 1, 3)), 99, (0.0, 0.0))
    problems = " ".join(validate_solution(inst, bad))
    assert "exceeds" in problems and "repeats" in problems and "stated profit" in problems
    assert validate_solution(inst, Solution.of(inst, [(0, 3)]))  # wrong tour count
    flipped = Solution(((0, 1, 3), (0, 2, 3)), 12, (6.0, 6.0))
    assert any("non-increasing" in p for p in validate_solution(inst, flipped))


def test_text_round_trip():
    inst = Instance.from_points([(0, 0, 0), (1, 0, 4), (2, 0, 6), (0, 0, 0)], 2, 10)
    sol = Solution.of(inst, [(0, 1, 3), (0, 2, 3)])
    assert Solution.from_text(inst, sol.to_text()) == sol
    assert sol.tour_profits(inst) == [6, 4]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_construct_is_feasible_bounded_and_reproducible(seed):
    inst = random_instance(random.Random(seed), n_max=8)
    sol = construct(inst, seed=1, budget=0.05)
    assert not validate_solution(inst, sol)
    assert sol.profit <= solve_exact(inst).optimum
    again = construct(inst, seed=1, budget=0.05)
    assert again.profit == sol.profit


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_improve_is_monotone(seed):
    rng = random.Random(seed)
    inst = random_instance(rng, n_max=8)
    base = construct(inst, budget=0.0)
    # drop one tour's customers to give the search some room
    tours = list(base.tours)
    tours[rng.randrange(len(tours))] = (inst.depart, inst.arrive)
    start = Solution.of(inst, tours)
    out = improve(inst, start, budget=0.05)
    assert out.profit >= start.profit
    assert not validate_solution(inst, out)
