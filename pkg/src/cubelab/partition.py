"""Las Vegas construction and exact verification of random partitions.

Clause 1 asks that every intersection of at most k translates of a0 have
density close to 2^-|X|. Clause 2 asks that, for a given dense U, almost
every shift s splits U evenly against a0 + s.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .dyadic import DyadicRational, fraction_json, parse_rational
from .errors import BudgetExceeded, ConstructionFailed, UsageError
from .hypercube import DenseSubset, IndexSet, Partition, intersect_translates, point_to_string
from .walsh import subset_correlation

DEFAULT_BUDGET = 1 << 34
MODES = ("fair-coin", "balanced")


def attempt_rng(seed: int, attempt: int = 0) -> np.random.Generator:
    if seed < 0 or attempt < 0:
        raise UsageError("seeds must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(attempt)]))


def _sample_with(universe: IndexSet, mode: str, rng: np.random.Generator) -> Partition:
    n = universe.size
    if mode == "fair-coin":
        arr = rng.integers(0, 2, size=n, dtype=np.uint8).astype(bool)
    elif mode == "balanced":
        arr = np.zeros(n, dtype=bool)
        arr[rng.permutation(n)[: n // 2]] = True
    else:
        raise UsageError(f"unknown sampling mode {mode!r}; expected one of {MODES}")
    return Partition(DenseSubset(universe, arr))


def sample_partition(universe: IndexSet, mode: str = "balanced", seed: int = 0) -> Partition:
    """Random partition; identical for identical (mode, seed)."""
    return _sample_with(universe, mode, attempt_rng(seed, 0))


# clause 1


@dataclass
class Prop1Report:
    k: int
    delta: Fraction
    worst_X: list[int]
    worst_deviation: DyadicRational
    worst_intersection: int
    passed: bool
    enumeration_mode: str
    samples: int | None = None
    seed: int | None = None
    checked: int = 0
    width: int = 0

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "delta": fraction_json(self.delta),
            "worst_X": [point_to_string(x, self.width) for x in self.worst_X],
            "worst_deviation": fraction_json(self.worst_deviation),
            "worst_intersection": self.worst_intersection,
            "pass": self.passed,
            "enumeration_mode": self.enumeration_mode,
            "samples": self.samples,
            "seed": self.seed,
            "sets_checked": self.checked,
        }


def _lt_dyadic(nums: np.ndarray, exp: int, bound: Fraction) -> np.ndarray:
    """Vectorized ``nums / 2**exp < bound`` for non-negative integer ``nums``."""
    p, q = bound.numerator, bound.denominator
    rhs = p << exp
    top = int(nums.max()) if nums.size else 0
    if top * q < (1 << 62) and rhs < (1 << 62):
        return nums.astype(np.int64) * q < rhs
    return np.array([int(v) * q < rhs for v in nums], dtype=bool)


def prop1_work(width: int, k: int, reduced: bool = True) -> int:
    """Point-operations of an exhaustive clause-1 sweep."""
    n = 1 << width
    if reduced:
        per_level = n * (2 * width + 3)
        return n + sum(math.comb(n - 1, j - 2) * per_level for j in range(2, k + 1))
    return sum(math.comb(n, j) * j * n for j in range(1, k + 1))


class _Worst:
    """Running maximum under the total order (deviation desc, X lexicographic)."""

    def __init__(self):
        self.num = -1
        self.exp = 0
        self.X: tuple[int, ...] = ()
        self.count = 0

    def offer(self, num: int, exp: int, X: tuple[int, ...], count: int) -> None:
        a = num << max(0, self.exp - exp)
        b = self.num << max(0, exp - self.exp) if self.num >= 0 else -1
        if self.num < 0 or a > b or (a == b and X < self.X):
            self.num, self.exp, self.X, self.count = num, exp, X, count


def verify_prop1(
    p: Partition,
    k: int,
    delta,
    mode: str = "exhaustive",
    samples: int = 1000,
    seed: int = 0,
    budget: int = DEFAULT_BUDGET,
    reduced: bool = True,
) -> Prop1Report:
    """Check | |⋂_{x∈X}(a0+x)|/2^w − 2^-|X| | < delta for all 1 <= |X| <= k.

    ``mode="exhaustive"`` enumerates every X (with 0 ∈ X fixed when
    ``reduced``; the quantity is translation invariant). ``mode="sampled"``
    checks ``samples`` random X drawn from a seeded generator.
    """
    delta = parse_rational(delta)
    if k < 1:
        raise UsageError("k must be >= 1")
    if delta <= 0:
        raise UsageError("delta must be positive")
    w = p.width
    n = 1 << w
    a0 = p.a0.members
    worst = _Worst()
    checked = 0

    if mode == "exhaustive":
        est = prop1_work(w, k, reduced)
        if est > budget:
            raise BudgetExceeded(f"exhaustive clause-1 sweep (width {w}, k {k})", est, budget)
        if reduced:
            checked = _sweep_reduced(a0, w, k, worst)
        else:
            checked = _sweep_all(p.a0, k, worst)
        samples_used = None
    elif mode == "sampled":
        rng = attempt_rng(seed, 0)
        kk = min(k, n)
        for _ in range(samples):
            size = int(rng.integers(1, kk + 1))
            X = tuple(sorted(int(x) for x in rng.choice(n, size=size, replace=False)))
            c = intersect_translates(p.a0, X).cardinality
            worst.offer(abs((c << size) - n), w + size, X, c)
        checked = samples
        samples_used = samples
    else:
        raise UsageError(f"unknown enumeration mode {mode!r}")

    dev = DyadicRational(worst.num, worst.exp)
    return Prop1Report(
        k=k,
        delta=delta,
        worst_X=list(worst.X),
        worst_deviation=dev,
        worst_intersection=worst.count,
        passed=dev < delta,
        enumeration_mode=mode if mode == "sampled" else ("exhaustive" if reduced else "exhaustive-unreduced"),
        samples=samples_used,
        seed=seed if mode == "sampled" else None,
        checked=checked,
        width=w,
    )


def _sweep_reduced(a0: np.ndarray, w: int, k: int, worst: _Worst) -> int:
    n = 1 << w
    c0 = int(np.count_nonzero(a0))
    worst.offer(abs(2 * c0 - n), w + 1, (0,), c0)
    checked = 1
    k = min(k, n)
    idx = np.arange(n, dtype=np.int64)
    for j in range(2, k + 1):
        # X = {0} ∪ Y ∪ {y}, Y sorted, y > max(Y)
        for Y in itertools.combinations(range(1, n), j - 2):
            base = a0.copy()
            for y in Y:
                base &= a0[idx ^ y]
            lo = (Y[-1] if Y else 0) + 1
            if lo >= n:
                continue
            if base.any():
                counts = subset_correlation(base, a0)[lo:]
            else:
                counts = np.zeros(n - lo, dtype=np.int64)
            devs = np.abs((counts << j) - n)
            i = int(np.argmax(devs))
            worst.offer(int(devs[i]), w + j, (0, *Y, lo + i), int(counts[i]))
            checked += n - lo
    return checked


def _sweep_all(a0: DenseSubset, k: int, worst: _Worst) -> int:
    n = a0.universe.size
    w = a0.width
    checked = 0
    for j in range(1, min(k, n) + 1):
        for X in itertools.combinations(range(n), j):
            c = intersect_translates(a0, X).cardinality
            worst.offer(abs((c << j) - n), w + j, X, c)
            checked += 1
    return checked


# clause 2


@dataclass
class Prop2Report:
    U_density: DyadicRational
    delta: Fraction
    T_U: DenseSubset
    T_U_density: DyadicRational
    passed: bool
    worst_shift: int
    worst_deviation: DyadicRational
    density_requirement: Fraction = field(default=None)

    def to_json(self, include_set: bool = False) -> dict:
        out = {
            "U_density": fraction_json(self.U_density),
            "delta": fraction_json(self.delta),
            "T_U_density": fraction_json(self.T_U_density),
            "pass": self.passed,
            "worst_shift": self.worst_shift,
            "worst_deviation": fraction_json(self.worst_deviation),
        }
        if include_set:
            out["T_U"] = self.T_U.to_json()
        return out


def split_counts(p: Partition, U: DenseSubset) -> np.ndarray:
    """``c[s] = |(a0 + s) ∩ U|`` for every shift s."""
    if p.width != U.width:
        raise UsageError("partition and witness set live in different cubes")
    return subset_correlation(U.members, p.a0.members)


def compute_T_U(p: Partition, U: DenseSubset, delta, density_loss=None) -> Prop2Report:
    """Shifts s with | |(a0+s) ∩ U|/2^w − |U|/2^(w+1) | < delta.

    The report passes when density(T_U) > 1 − density_loss (default delta).
    """
    delta = parse_rational(delta)
    density_loss = delta if density_loss is None else parse_rational(density_loss)
    if U.cardinality == 0:
        raise UsageError("compute_T_U needs a non-empty U")
    w = p.width
    counts = split_counts(p, U)
    # deviation = |2c − |U|| / 2^(w+1)
    dev_num = np.abs(2 * counts - U.cardinality)
    inside = _lt_dyadic(dev_num, w + 1, delta)
    T = DenseSubset(p.universe, inside)
    i = int(np.argmax(dev_num))
    t_density = T.density()
    return Prop2Report(
        U_density=U.density(),
        delta=delta,
        T_U=T,
        T_U_density=t_density,
        passed=t_density > 1 - density_loss,
        worst_shift=i,
        worst_deviation=DyadicRational(int(dev_num[i]), w + 1),
        density_requirement=1 - density_loss,
    )


def compute_T_U_direct(p: Partition, U: DenseSubset, delta) -> DenseSubset:
    """Slow path: T_U by explicit XOR-shift and AND per s."""
    delta = parse_rational(delta)
    w = p.width
    n = 1 << w
    idx = np.arange(n, dtype=np.int64)
    out = np.zeros(n, dtype=bool)
    for s in range(n):
        c = int(np.count_nonzero(p.a0.members[idx ^ s] & U.members))
        out[s] = Fraction(abs(2 * c - U.cardinality), 2 * n) < delta
    return DenseSubset(p.universe, out)


# Las Vegas search


@dataclass
class AttemptRecord:
    attempt: int
    clause1_pass: bool
    clause2_pass: list[bool]

    def to_json(self) -> dict:
        return {"attempt": self.attempt, "clause1": self.clause1_pass, "clause2": self.clause2_pass}


@dataclass
class FindResult:
    partition: Partition
    attempts: int
    prop1: Prop1Report
    prop2: list[Prop2Report]
    log: list[AttemptRecord]
    mode: str
    seed: int

    def to_json(self) -> dict:
        return {
            "partition": self.partition.to_json(),
            "attempts": self.attempts,
            "mode": self.mode,
            "seed": self.seed,
            "prop1": self.prop1.to_json(),
            "prop2": [r.to_json() for r in self.prop2],
            "log": [r.to_json() for r in self.log],
        }


class PartitionSearchExhausted(ConstructionFailed):
    def __init__(self, tries: int, tally: dict, log: list[AttemptRecord]):
        super().__init__(f"no passing partition in {tries} attempts: {tally}", tally=tally)
        self.tally = tally
        self.log = log


def find_partition(
    universe: IndexSet,
    k: int,
    delta,
    witnesses: Sequence[DenseSubset] = (),
    delta2=None,
    mode: str = "balanced",
    max_tries: int = 10,
    seed: int = 0,
    verify_mode: str = "exhaustive",
    samples: int = 1000,
    budget: int = DEFAULT_BUDGET,
) -> FindResult:
    """Sample, verify both clauses, retry with a fresh generator per attempt."""
    if max_tries < 1:
        raise UsageError("max_tries must be >= 1")
    delta = parse_rational(delta)
    if witnesses and delta2 is None:
        raise UsageError("delta2 is required when witness sets are given")
    delta2 = parse_rational(delta2) if delta2 is not None else None
    tally = {"clause1": 0, "clause2": 0}
    log: list[AttemptRecord] = []
    for attempt in range(max_tries):
        part = _sample_with(universe, mode, attempt_rng(seed, attempt))
        r1 = verify_prop1(part, k, delta, mode=verify_mode, samples=samples, seed=seed, budget=budget)
        r2 = [compute_T_U(part, U, delta2) for U in witnesses] if r1.passed else []
        ok2 = [r.passed for r in r2]
        log.append(AttemptRecord(attempt + 1, r1.passed, ok2))
        if not r1.passed:
            tally["clause1"] += 1
            continue
        if not all(ok2):
            tally["clause2"] += 1
            continue
        return FindResult(part, attempt + 1, r1, r2, log, mode, seed)
    raise PartitionSearchExhausted(max_tries, tally, log)
