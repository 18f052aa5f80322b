from fractions import Fraction

import mpmath
import pytest

from cubelab.bounds import (
    BoundQuery,
    bernstein_bound,
    bounds_table,
    minimal_width,
    prop1_failure_log_bound,
    prop2_failure_log_bound,
)
from cubelab.errors import UsageError
from cubelab.tower import reference_schedule


def close(a, b, tol=1e-9):
    return abs(float(a) - b) <= tol * max(1.0, abs(b))


def test_bernstein_examples():
    assert bernstein_bound(0, Fraction(1, 10)).clamped
    assert bernstein_bound(0, Fraction(1, 10)).probability() == 1
    assert close(bernstein_bound(400, Fraction(1, 10)).probability(), 0.7357588823428847)
    for d in (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8)):
        n = int(4 / d**2)
        assert close(bernstein_bound(n, d).probability(), 2 / float(mpmath.e))


def test_bernstein_closed_form_to_ten_digits():
    got = bernstein_bound(1000, Fraction(15, 100)).value
    assert mpmath.almosteq(got, mpmath.log(2) - mpmath.mpf(5.625), rel_eps=mpmath.mpf(10) ** -10)


def test_prop1_example():
    b = prop1_failure_log_bound(BoundQuery(16, 2, Fraction(1, 4), Fraction(1, 4)))
    assert close(b.value, 144 * float(mpmath.log(2)) - 256)
    assert round(float(b), 1) == -156.2


def test_prop1_vacuous_for_small_width():
    for w in range(1, 5):
        b = prop1_failure_log_bound(BoundQuery(w, 2, Fraction(1, 4), Fraction(1)))
        assert b.clamped and b.value == 0


def test_prop2_example():
    b = prop2_failure_log_bound(BoundQuery(18, 1, Fraction(1, 4), Fraction(1, 6)))
    assert round(float(b), 1) == -441.9


def test_prop2_zero_epsilon_is_vacuous():
    assert prop2_failure_log_bound(BoundQuery(18, 1, 0, Fraction(1, 6))).clamped


def test_bounds_decrease_past_crossover():
    prev1 = prev2 = None
    for w in range(14, 40):
        q = BoundQuery(w, 2, Fraction(1, 4), Fraction(1, 4))
        r1, r2 = prop1_failure_log_bound(q).raw, prop2_failure_log_bound(q).raw
        if prev1 is not None:
            assert r1 < prev1 and r2 < prev2
        prev1, prev2 = r1, r2


def test_prop2_doubling_width_doubles_exponent():
    for w in (10, 14, 20):
        e1 = (w + 1) * mpmath.log(2) - prop2_failure_log_bound(BoundQuery(w, 1, Fraction(1, 4), Fraction(1, 6))).raw
        e2 = (2 * w + 1) * mpmath.log(2) - prop2_failure_log_bound(BoundQuery(2 * w, 1, Fraction(1, 4), Fraction(1, 6))).raw
        assert e2 >= 2 * e1


def test_minimal_width_is_certified():
    target = mpmath.log(mpmath.mpf("1e-6"))
    w = minimal_width(2, Fraction(1, 4), Fraction(1, 4), target)

    def ok(v):
        q = BoundQuery(v, 2, Fraction(1, 4), Fraction(1, 4))
        return prop1_failure_log_bound(q).value <= target and prop2_failure_log_bound(q).value <= target

    assert ok(w) and not ok(w - 1)
    assert w == 15


def test_minimal_width_monotone_in_target():
    ws = [minimal_width(2, Fraction(1, 4), Fraction(1, 4), t) for t in (-100, -50, -10, -1)]
    assert ws == sorted(ws, reverse=True)


def test_minimal_width_for_reference_schedule():
    k, d = reference_schedule(0)
    assert (k, d) == (8, Fraction(1, 64))
    assert minimal_width(k, d, d, -1) == 33


def test_minimal_width_rejects_non_negative_target():
    with pytest.raises(UsageError):
        minimal_width(2, Fraction(1, 4), Fraction(1, 4), 0)


def test_query_validation():
    with pytest.raises(UsageError):
        BoundQuery(10, 0, Fraction(1, 4), Fraction(1, 4))
    with pytest.raises(UsageError):
        BoundQuery(10, 1, Fraction(1, 4), 0)
    with pytest.raises(ValueError):
        BoundQuery(10, 1, 0.25, Fraction(1, 4))


def test_bounds_table_rows():
    rows = bounds_table([16, 18], 2, Fraction(1, 4), Fraction(1, 4))
    assert [r["width"] for r in rows] == [16, 18]
    assert rows[0]["clause1"]["log_bound"].startswith("-156.18")
