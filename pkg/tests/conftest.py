from fractions import Fraction

import numpy as np
import pytest

from cubelab.hypercube import DenseSubset, IndexSet, Partition
from cubelab.tower import BlockSpec, BlockTower, build_tower


@pytest.fixture(scope="session")
def tower_2x2():
    """Widths (2, 2): a0_0 = {00, 01}, a0_1 = {00, 11}."""
    a0 = DenseSubset.from_strings(["00", "01"])
    a1 = DenseSubset.from_strings(["00", "11"])
    specs = [BlockSpec(2, 1, Fraction(1, 4), Fraction(1, 2)), BlockSpec(2, 1, Fraction(1, 8), Fraction(1, 2))]
    return BlockTower(specs, [Partition(a0), Partition(a1)])


@pytest.fixture(scope="session")
def tower_4x6():
    specs = [BlockSpec(4, 2, Fraction(1, 8), Fraction(1, 4)), BlockSpec(6, 2, Fraction(1, 16), Fraction(1, 4))]
    return build_tower(specs, seed=0)


_towers = {}


def desk_tower_6x6():
    """Two width-6 blocks; cached because hypothesis tests cannot take fixtures."""
    if "6x6" not in _towers:
        specs = [BlockSpec(6, 2, Fraction(1, 64), Fraction(1, 4)), BlockSpec(6, 2, Fraction(1, 1024), Fraction(1, 4))]
        _towers["6x6"] = build_tower(specs, seed=5)
    return _towers["6x6"]


@pytest.fixture(scope="session")
def tower_6x6():
    return desk_tower_6x6()


@pytest.fixture(scope="session")
def tower_8x8():
    specs = [BlockSpec(8, 2, Fraction(1, 16), Fraction(1, 8)), BlockSpec(8, 2, Fraction(1, 32), Fraction(1, 8))]
    return build_tower(specs, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_subset(width, size, seed):
    return DenseSubset.random(IndexSet(width), size, np.random.default_rng(seed))
