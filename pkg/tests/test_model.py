import logging
import random

import pytest
from hypothesis import given, settings, strategies as st

from topcut.instance import Instance, accessibility
from topcut.model import (CutKind, InfeasibleInstance, LinearRow, ModelError, VarRef,
                          add_symmetry_rows, build_base, dump_rows, parse_rows, pin_inaccessible,
                          tours_to_assignment, xv, yv)
from topcut.oracle import enumerate_feasible

from conftest import random_instance


def grid19(m=2, L=60.0):
    pts = [(0.0, 0.0, 0)] + [(float(k % 5), float(k // 5), 10 + k) for k in range(19)] + [(0.0, 0.0, 0)]
    return Instance.from_points(pts, m, L)


def test_two_customers_single_vehicle_column_count():
    inst = Instance.from_points([(0, 0, 0), (1, 0, 5), (0, 1, 7), (1, 1, 0)], 1, 10)
    mask = accessibility(inst)
    model = build_base(inst, mask)
    ys = [c for c in model.columns if c.kind == "y"]
    assert len(ys) == 2
    assert model.n_vars == 2 + len(mask.accessible_arcs)


def test_nineteen_customers_two_vehicles():
    inst = grid19()
    model = build_base(inst, accessibility(inst))
    assert sum(c.kind == "y" for c in model.columns) == 38


def test_y_columns_come_first():
    inst = grid19()
    model = build_base(inst, accessibility(inst))
    kinds = [c.kind for c in model.columns]
    assert kinds == sorted(kinds, key=lambda k: model.branching_priority[k])


def test_all_inaccessible_gives_only_depot_arc():
    inst = Instance.from_points([(0, 0, 0), (5, 5, 3), (1, 0, 0)], 2, 1.5)
    model = build_base(inst, accessibility(inst))
    assert [c for c in model.columns if c.kind == "y"] == []
    assert model.is_feasible(tours_to_assignment([[0, 2], [0, 2]]))


def test_empty_tour_too_long():
    inst = Instance.from_points([(0, 0, 0), (1, 1, 3), (10, 0, 0)], 1, 5)
    with pytest.raises(InfeasibleInstance):
        build_base(inst, accessibility(inst))


@pytest.mark.parametrize("m, rows", [(1, 0), (2, 1), (3, 2)])
def test_symmetry_row_count(m, rows):
    inst = grid19(m=m)
    model = build_base(inst, accessibility(inst))
    ids = add_symmetry_rows(model)
    assert len(ids) == rows
    assert model.count_by_kind().get(CutKind.SYMMETRY, 0) == rows


def test_symmetry_rejects_the_other_order():
    # tour profits (40, 50): the second tour is the richer one
    pts = [(0, 0, 0), (1, 0, 40), (-1, 0, 50), (0, 0, 0)]
    inst = Instance.from_points(pts, 2, 10)
    model = build_base(inst, accessibility(inst))
    add_symmetry_rows(model)
    bad = tours_to_assignment([[0, 1, 3], [0, 2, 3]])
    good = tours_to_assignment([[0, 2, 3], [0, 1, 3]])
    assert [model.rows[k].kind for k in model.violated_rows(bad)] == [CutKind.SYMMETRY]
    assert model.is_feasible(good)


def test_pin_inaccessible_counts():
    # customer 2 is far away; everything touching it is inaccessible
    pts = [(0, 0, 0), (1, 0, 5), (30, 0, 5), (0, 0, 0)]
    inst = Instance.from_points(pts, 1, 5)
    mask = accessibility(inst)
    model = build_base(inst, mask)
    ids = pin_inaccessible(model, mask)
    kinds = model.count_by_kind()
    assert kinds[CutKind.INACCESSIBLE] == len(ids)
    # one customer row plus arcs d->2, 1->2, 2->1, 2->a
    assert len(ids) == 1 + 4
    row = model.rows[ids[0]]
    assert not row.satisfied({yv(2, 0): 1.0})


def test_pin_inaccessible_nothing_to_pin():
    inst = Instance.from_points([(0, 0, 0), (1, 0, 5), (0, 1, 5), (0, 0, 0)], 1, 50)
    mask = accessibility(inst)
    model = build_base(inst, mask)
    assert pin_inaccessible(model, mask) == []


def test_add_row_dedups_and_rejects_unknown():
    inst = Instance.from_points([(0, 0, 0), (1, 0, 5), (0, 1, 5), (0, 0, 0)], 2, 50)
    model = build_base(inst, accessibility(inst))
    row = LinearRow.make([(xv(1, 2, 0), 1.0), (xv(2, 1, 0), 1.0)], "<=", 1, CutKind.GSEC)
    again = LinearRow.make([(xv(2, 1, 0), 2.0), (xv(1, 2, 0), 2.0)], "<=", 2, CutKind.GSEC)
    first = model.add_row(row)
    assert model.add_row(again) == first
    with pytest.raises(ModelError):
        model.add_row(LinearRow.make([(xv(1, 7, 0), 1.0)], "<=", 1, CutKind.GSEC))
    with pytest.raises(ModelError):
        model.add_row(LinearRow.make([(yv(1, 5), 1.0)], "<=", 1, CutKind.GSEC))


def test_vacuous_row_is_logged(caplog):
    inst = Instance.from_points([(0, 0, 0), (1, 0, 5), (0, 0, 0)], 1, 50)
    model = build_base(inst, accessibility(inst))
    with caplog.at_level(logging.INFO, logger="topcut.model"):
        model.add_row(LinearRow.make([], "<=", 0, CutKind.CLIQUE))
    assert "vacuous" in caplog.text


def test_row_rejects_bad_sense_and_nan():
    with pytest.raises(ModelError):
        LinearRow.make([(yv(1, 0), 1.0)], "<", 1, CutKind.BASE)
    with pytest.raises(ModelError):
        LinearRow.make([(yv(1, 0), float("nan"))], "<=", 1, CutKind.BASE)


def test_varref_text_round_trip():
    for ref in (yv(3, 1), xv(0, 4, 2)):
        assert VarRef.parse(str(ref)) == ref
    with pytest.raises(ValueError):
        VarRef.parse("z_1_2")


def test_pool_serialization_round_trip():
    inst = grid19(m=3)
    model = build_base(inst, accessibility(inst))
    add_symmetry_rows(model)
    rows = model.rows
    assert parse_rows(dump_rows(rows)) == rows


def test_pool_parse_error_names_line():
    with pytest.raises(ModelError, match="line 2"):
        parse_rows("Base <= 1.0 : 1.0*y_1_0\nBase <= x : 1.0*y_1_0\n")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_column_count_and_feasible_solutions_pass_base_rows(seed):
    inst = random_instance(random.Random(seed), n_max=6)
    mask = accessibility(inst)
    model = build_base(inst, mask)
    assert model.n_vars == model.fleet * (len(mask.accessible_customers) + len(mask.accessible_arcs))
    pin_inaccessible(model, mask)
    for sol in enumerate_feasible(inst, max_customers=6, limit=5000):
        assert model.is_feasible(tours_to_assignment(sol.tours))
