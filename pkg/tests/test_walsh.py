import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cubelab.walsh import subset_correlation, wht, xor_correlate


def brute_correlate(f, g):
    n = f.size
    return np.array([sum(int(f[t]) * int(g[t ^ s]) for t in range(n)) for s in range(n)])


@settings(max_examples=40)
@given(st.integers(0, 6).flatmap(lambda w: st.tuples(arrays(np.int64, 1 << w, elements=st.integers(0, 1000)), arrays(np.int64, 1 << w, elements=st.integers(0, 1000)))))
def test_xor_correlate_matches_definition(fg):
    f, g = fg
    got = xor_correlate(f.astype(np.uint64), g.astype(np.uint64), int(f.sum()) * 1000 + 1)
    assert np.array_equal(got, brute_correlate(f, g))


@given(arrays(np.bool_, 32))
def test_subset_correlation_counts_translate_intersections(a):
    b = np.roll(a, 3)
    c = subset_correlation(a, b)
    idx = np.arange(32)
    for s in (0, 1, 17, 31):
        assert c[s] == np.count_nonzero(a & b[idx ^ s])


def test_wht_twice_scales_by_length():
    x = np.arange(16, dtype=np.uint64)
    assert np.array_equal(wht(wht(x)), x * np.uint64(16))


def test_overflow_guard():
    f = np.ones(4, dtype=np.uint64)
    with pytest.raises(OverflowError):
        xor_correlate(f, f, 1 << 63)
