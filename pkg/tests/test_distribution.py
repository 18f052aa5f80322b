from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_subset
from cubelab.distribution import (
    Distribution,
    bin_count,
    bin_index,
    level_sets,
    project_set_to_distribution,
    random_distribution,
    shifted_sums,
    theorem8_construct,
    verify_distribution_conclusion,
)
from cubelab.dyadic import DyadicRational
from cubelab.errors import UsageError
from cubelab.hypercube import DenseSubset, IndexSet
from cubelab.partition import compute_T_U, sample_partition

DESK = dict(bin_delta=Fraction(1, 128), bin_density_loss=Fraction(1, 32))


def test_cap_is_enforced():
    with pytest.raises(UsageError):
        Distribution(IndexSet(2), [2, 0, 0, 0], 2)
    with pytest.raises(UsageError):
        Distribution(IndexSet(2), [-1, 0, 0, 0], 4)
    assert Distribution(IndexSet(2), [1, 1, 1, 1], 2).total == 1


def test_projection_example():
    J = DenseSubset.from_strings(["0000", "0001", "0110"])
    m = project_set_to_distribution(J, 2)
    assert m.mass(0) == Fraction(2, 16)
    assert m.mass(2) == Fraction(1, 16)
    assert m.mass(1) == 0 and m.mass(3) == 0
    assert m.total == Fraction(3, 16)


def test_projection_extremes_and_alignment():
    u = IndexSet(6)
    full = project_set_to_distribution(DenseSubset.full(u), 2)
    assert all(v == Fraction(1, 4) for v in full.masses()) and full.total == 1
    assert project_set_to_distribution(DenseSubset.empty(u), 3).total == 0
    with pytest.raises(UsageError):
        project_set_to_distribution(DenseSubset.full(u), 3, blocks=[2, 4])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 7))
def test_projection_matches_prefix_count(seed, pw):
    J = random_subset(8, int(np.random.default_rng(seed).integers(0, 256)), seed)
    m = project_set_to_distribution(J, pw)
    slow = oracles.prefix_masses_slow(oracles.points(J), 8, pw)
    assert all(m.mass(s) == slow.get(s, 0) for s in range(1 << pw))
    assert m.total == J.density()
    assert m.check()


def test_level_sets_constant_distribution():
    u = IndexSet(4)
    m = Distribution(u, [1] * 16, 4)
    bins = level_sets(m, Fraction(1, 8))
    assert len(bins) == 8
    assert bins[7][1] == DenseSubset.full(u)
    assert all(U.cardinality == 0 for i, U in bins[:7])


def test_level_sets_zero_distribution():
    assert all(U.cardinality == 0 for _, U in level_sets(Distribution.zero(IndexSet(3)), Fraction(1, 4)))


def test_bin_count_conventions():
    assert bin_count(Fraction(1, 8)) == 8
    assert bin_count(Fraction(2, 7)) == 4
    assert bin_count(Fraction(3, 2)) == 1
    with pytest.raises(UsageError):
        bin_index(Distribution.zero(IndexSet(2)), 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 12))
def test_bins_partition_the_support_with_strict_lower_bounds(seed, dq):
    m = random_distribution(IndexSet(6), 12, np.random.default_rng(seed))
    delta = Fraction(1, dq) if dq > 1 else Fraction(3, 7)
    bins = level_sets(m, delta)
    union = np.zeros(64, dtype=bool)
    for i, U in bins:
        assert not (union & U.members).any()
        union |= U.members
        for s in U:
            x = m.mass(s).to_fraction() * 64
            assert i * delta < x and (x <= (i + 1) * delta or i == len(bins) - 1)
    assert np.array_equal(union, m.numerators > 0)


def test_theorem8_constant_distribution_is_exact():
    p = sample_partition(IndexSet(6), "balanced", 0)
    m = Distribution(IndexSet(6), [1] * 64, 6)
    cert = theorem8_construct(m, p, Fraction(1, 8))
    assert cert.T_m == DenseSubset.full(p.universe)
    assert cert.contract_worst == 0
    # the ledger still charges the binning loss: m' = 7/8 while m = 1
    assert cert.binning_loss == Fraction(1, 8)


def test_theorem8_rejects_zero_distribution():
    p = sample_partition(IndexSet(4), "balanced", 0)
    with pytest.raises(UsageError):
        theorem8_construct(Distribution.zero(IndexSet(4)), p, Fraction(1, 8))


@pytest.mark.parametrize("seed", range(5))
def test_theorem8_certificate_is_sound(seed):
    rng = np.random.default_rng(seed)
    p = sample_partition(IndexSet(12), "balanced", seed)
    m = random_distribution(IndexSet(12), 16, rng)
    cert = theorem8_construct(m, p, Fraction(1, 8), **DESK)
    check = verify_distribution_conclusion(m, p, cert.T_m, cert.certified_error)
    assert check.passed
    assert check.worst_deviation == cert.contract_worst
    assert cert.T_m_density > 1 - Fraction(1, 8)
    assert abs(cert.binning_loss) <= 2 * cert.delta
    # mass conservation across kept and discarded bins
    assert cert.kept_mass + cert.discarded_mass == m.total


def test_theorem8_T_m_is_intersection_of_bin_sets():
    p = sample_partition(IndexSet(12), "balanced", 1)
    m = random_distribution(IndexSet(12), 16, np.random.default_rng(1))
    cert = theorem8_construct(m, p, Fraction(1, 8), **DESK)
    T = DenseSubset.full(p.universe)
    for i, U in level_sets(m, Fraction(1, 8)):
        if i in cert.kept_bins:
            T = T & compute_T_U(p, U, cert.bin_delta).T_U
    assert T == cert.T_m


def test_looser_tolerance_never_shrinks_T_m():
    p = sample_partition(IndexSet(10), "balanced", 2)
    m = random_distribution(IndexSet(10), 14, np.random.default_rng(2))
    prev = None
    for bd in (Fraction(1, 64), Fraction(1, 32), Fraction(1, 16)):
        T = theorem8_construct(m, p, Fraction(1, 8), bin_delta=bd, bin_density_loss=Fraction(1, 2)).T_m
        if prev is not None:
            assert prev.issubset(T)
        prev = T


def test_coupled_regime_flag():
    p = sample_partition(IndexSet(12), "balanced", 3)
    m = Distribution(IndexSet(12), [1] * 4096, 12)
    cert = theorem8_construct(m, p, Fraction(1, 2))
    assert cert.couplings_hold
    assert cert.certified_error <= cert.headline_error


def test_shifted_sums_match_slow_sum():
    p = sample_partition(IndexSet(5), "fair-coin", 0)
    m = random_distribution(IndexSet(5), 10, np.random.default_rng(0))
    sums = shifted_sums(m, p.a0)
    masses = [v.to_fraction() for v in m.masses()]
    for s in range(32):
        assert Fraction(int(sums[s]), 1 << m.log2_denominator) == oracles.shifted_sum_slow(masses, oracles.points(p.a0), s)


def test_verify_on_empty_T_is_vacuous():
    p = sample_partition(IndexSet(4), "balanced", 0)
    m = random_distribution(IndexSet(4), 8, np.random.default_rng(0))
    r = verify_distribution_conclusion(m, p, DenseSubset.empty(p.universe), 0)
    assert r.passed and r.checked == 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([Fraction(1), Fraction(1, 2), Fraction(3, 4), Fraction(1, 8)]))
def test_scaled_indicator_deviation_is_b_times_clause2(seed, b):
    p = sample_partition(IndexSet(8), "balanced", seed)
    U = random_subset(8, 96, seed)
    m = Distribution.scaled_indicator(U, b)
    delta = Fraction(1, 16)
    T = compute_T_U(p, U, delta).T_U
    r = verify_distribution_conclusion(m, p, T, b * delta)
    clause2 = verify_distribution_conclusion(Distribution.scaled_indicator(U, 1), p, T, delta)
    assert r.worst_deviation == b * clause2.worst_deviation
    assert r.worst_deviation < b * delta or T.cardinality == 0


def test_json_round_trip():
    m = random_distribution(IndexSet(5), 11, np.random.default_rng(3))
    assert Distribution.from_json(m.to_json()) == m
    assert isinstance(m.total, DyadicRational)
