import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from cubelab.dyadic import DyadicRational
from cubelab.errors import BudgetExceeded, UsageError
from cubelab.hypercube import DenseSubset, IndexSet, point_from_string
from cubelab.tower import (
    BlockSpec,
    BlockTower,
    CylinderUnion,
    F_all,
    F_eval,
    build_tower,
    chain_attribution,
    covering_check,
    covering_data,
    covering_work,
    evaluate_constraints,
    fiber,
    reference_schedule,
    random_cylinder_union,
    threshold,
    translate_union_exists,
)


def conditions(t, name):
    return {c.block: c.holds for c in t.constraint_report if c.name == name}


def test_reference_schedule():
    assert reference_schedule(0) == (8, Fraction(1, 64))
    assert reference_schedule(2) == (32, Fraction(1, 1024))


def test_thresholds():
    assert threshold(0) == Fraction(3, 4)
    assert threshold(1) == Fraction(7, 8)


def test_desk_tower_flags_growth(tower_4x6):
    assert conditions(tower_4x6, "growth") == {1: False}
    assert conditions(tower_4x6, "order") == {1: True}
    assert all(conditions(tower_4x6, "nondegenerate").values())
    assert all(conditions(tower_4x6, "balanced").values())
    assert conditions(tower_4x6, "schedule_k") == {0: False, 1: False}


def test_reference_schedule_blocks_pass_schedule_checks():
    specs = [BlockSpec(10, 8, Fraction(1, 128), Fraction(1, 64))]
    t = BlockTower(specs, [build_tower([BlockSpec(10, 1, Fraction(1, 128), Fraction(1, 2))], seed=0).partitions[0]])
    assert conditions(t, "schedule_k") == {0: True}
    assert conditions(t, "schedule_delta") == {0: True}
    assert "growth" not in {c.name for c in t.constraint_report}


def test_build_is_deterministic(tower_4x6):
    again = build_tower(tower_4x6.specs, seed=0)
    assert again == tower_4x6
    assert build_tower(tower_4x6.specs, seed=1) != tower_4x6


def test_tower_json_round_trip(tower_4x6):
    back = BlockTower.from_json(json.loads(json.dumps(tower_4x6.to_json())))
    assert back == tower_4x6
    assert [c.to_json() for c in back.constraint_report] == [c.to_json() for c in tower_4x6.constraint_report]


def test_F_example(tower_2x2):
    x = point_from_string("01" + "10")
    assert F_eval(tower_2x2, x) == (0, 1)


def test_F_all_a0_points_map_to_zero(tower_2x2):
    for x in range(16):
        if all(tower_2x2.restrict(x, n) in tower_2x2.side(n, 0) for n in range(2)):
            assert F_eval(tower_2x2, x) == (0, 0)


def test_F_is_local_and_surjective(tower_4x6):
    y = F_all(tower_4x6)
    assert sorted(set(y.tolist())) == [0, 1, 2, 3]
    rng = np.random.default_rng(0)
    for x in rng.integers(0, 1 << 10, size=50):
        x = int(x)
        bits = F_eval(tower_4x6, x)
        assert y[x] == bits[0] | bits[1] << 1
        # move inside block 1 while staying on the same side
        side = tower_4x6.side(1, bits[1])
        other = int(rng.choice(side.points()))
        x2 = (x & 0xF) | other << 4
        assert F_eval(tower_4x6, x2) == bits


def test_fiber_example(tower_2x2):
    f = fiber(tower_2x2, (0, 1))
    assert f.cardinality == 4
    pt = DenseSubset.from_points(IndexSet(4), [point_from_string("00" + "01")])
    assert f.measure(pt) == Fraction(1, 4)
    assert f.measure(DenseSubset.full(IndexSet(4))) == 1


def test_fibers_partition_the_cube(tower_4x6):
    sizes = [fiber(tower_4x6, (a, b)).cardinality for a in (0, 1) for b in (0, 1)]
    assert sum(sizes) == 1 << 10
    assert set(sizes) == {1 << 8}


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_fiber_measure_is_additive(seed):
    t = build_tower([BlockSpec(3, 1, Fraction(1, 4), Fraction(1, 2)), BlockSpec(3, 1, Fraction(1, 4), Fraction(1, 2))], seed=0)
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 2, size=64).astype(bool)
    A = DenseSubset(IndexSet(6), arr)
    B = A.complement()
    f = fiber(t, (int(rng.integers(0, 2)), int(rng.integers(0, 2))))
    assert f.measure(A) + f.measure(B) == 1


def test_cylinder_union_measure(tower_4x6):
    U = CylinderUnion.from_cylinders(tower_4x6, [(1, 3), (2, 5)])
    assert U.measure() == Fraction(1, 16) + Fraction(1, 1024) * (0 if 5 & 0xF == 3 else 1)
    assert isinstance(U.measure(), DyadicRational)
    assert CylinderUnion.from_json(tower_4x6, U.to_json()).members == U.members


def test_random_unions_respect_the_measure_cap(tower_4x6):
    rng = np.random.default_rng(0)
    for _ in range(10):
        assert random_cylinder_union(tower_4x6, rng).measure() <= Fraction(1, 2)


def test_empty_union(tower_4x6):
    U = CylinderUnion(tower_4x6, DenseSubset.empty(IndexSet(10)))
    cw = covering_data(tower_4x6, U)
    assert all(Z.cardinality == 0 for Z in cw.Z_sets)
    assert not cw.W_mask().any()
    assert [int(g.sum()) for g in cw.good] == [1, 16, 1024]
    rep = covering_check(tower_4x6, U)
    assert rep.counterexamples == [] and rep.inclusions == 0


def test_full_union(tower_4x6):
    U = CylinderUnion(tower_4x6, DenseSubset.full(IndexSet(10)))
    cw = covering_data(tower_4x6, U)
    assert cw.Z_sets[0] == DenseSubset.full(IndexSet(4))
    assert cw.Z_sets[1].cardinality == 0
    assert cw.good_prefixes(1) == []
    rep = covering_check(tower_4x6, U)
    assert rep.counterexamples == [] and rep.inclusions == 4 << 10


@pytest.mark.parametrize("seed", range(6))
def test_Z_sets_match_slow_oracle(tower_4x6, seed):
    U = random_cylinder_union(tower_4x6, np.random.default_rng(seed))
    cw = covering_data(tower_4x6, U)
    slow = oracles.Z_sets_slow(tower_4x6, oracles.points(U.members))
    assert [oracles.points(Z) for Z in cw.Z_sets] == slow
    rep = covering_check(tower_4x6, U, witness=cw)
    assert rep.counterexamples == oracles.covering_counterexamples_slow(tower_4x6, oracles.points(U.members)) == []


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_small_measure_empties_Z_0(seed):
    t = build_tower([BlockSpec(4, 2, Fraction(1, 8), Fraction(1, 4)), BlockSpec(6, 2, Fraction(1, 16), Fraction(1, 4))], seed=0)
    rng = np.random.default_rng(seed)
    size = int(rng.integers(0, 32))  # measure < 2^-(1+4)
    U = CylinderUnion(t, DenseSubset.random(IndexSet(10), size, rng))
    assert covering_data(t, U).Z_sets[0].cardinality == 0


def test_covering_budget(tower_4x6):
    U = CylinderUnion(tower_4x6, DenseSubset.empty(IndexSet(10)))
    with pytest.raises(BudgetExceeded) as exc:
        covering_check(tower_4x6, U, budget=100)
    assert exc.value.estimate == covering_work(tower_4x6)


def test_covering_rejects_depth_mismatch(tower_4x6, tower_2x2):
    U = CylinderUnion(tower_2x2, DenseSubset.empty(IndexSet(4)))
    with pytest.raises(UsageError):
        covering_data(tower_4x6, U)


def test_translate_union_search():
    b = np.array([1, 1, 0, 0], dtype=bool)
    assert translate_union_exists(b, 1, 2) is True
    assert translate_union_exists(b, 2, 2) is True  # Y = {0, 1}
    assert translate_union_exists(b, 2, 3) is False
    assert translate_union_exists(b, 5, 1) is False


def test_chain_attribution_reports_every_block(tower_4x6):
    rows = chain_attribution(tower_4x6)
    assert [r["block"] for r in rows] == [0, 1]
    assert all(r["held"] in (True, False, None) for r in rows)


def test_z_bound_holds_when_chain_holds(tower_4x6):
    rng = np.random.default_rng(7)
    chain = {r["block"]: r["held"] for r in chain_attribution(tower_4x6)}
    for _ in range(10):
        cw = covering_data(tower_4x6, random_cylinder_union(tower_4x6, rng))
        for e, mu in zip(cw.z_bound, cw.u_measure):
            if chain[e["block"]] and mu["within"]:
                assert e["within"]
