"""Distributions on 2^I, level-set binning, and the binned T_m construction.

A distribution stores integer numerators over a common power-of-two
denominator, so every mass, total and partial sum is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .dyadic import DyadicRational, fraction_json, parse_rational
from .errors import ConstructionFailed, UsageError
from .hypercube import DenseSubset, IndexSet, Partition
from .partition import Prop2Report, compute_T_U
from .walsh import xor_correlate

MAX_LOG2_DENOMINATOR = 62


class Distribution:
    """Mass function on 2^width with ``0 <= m(s) <= 2^-width``."""

    __slots__ = ("domain", "numerators", "log2_denominator", "_total")

    def __init__(self, domain: IndexSet, numerators, log2_denominator: int):
        nums = np.array(numerators, dtype=np.int64)
        if nums.shape != (domain.size,):
            raise UsageError(f"need {domain.size} masses, got {nums.shape}")
        if log2_denominator > MAX_LOG2_DENOMINATOR:
            raise UsageError(f"log2 denominator {log2_denominator} too large")
        if nums.size and int(nums.min()) < 0:
            raise UsageError("masses must be non-negative")
        top = int(nums.max()) if nums.size else 0
        if (top << domain.width) > (1 << log2_denominator):
            raise UsageError("a mass exceeds the per-point cap 1/2^width")
        nums.flags.writeable = False
        self.domain = domain
        self.numerators = nums
        self.log2_denominator = int(log2_denominator)
        self._total = int(nums.sum())

    @classmethod
    def from_masses(cls, domain: IndexSet, masses: Sequence) -> "Distribution":
        ds = [m if isinstance(m, DyadicRational) else DyadicRational.from_fraction(parse_rational(m)) for m in masses]
        e = max((d.log2_denominator for d in ds), default=0)
        e = max(e, domain.width)
        return cls(domain, [d.numerator << (e - d.log2_denominator) for d in ds], e)

    @classmethod
    def zero(cls, domain: IndexSet) -> "Distribution":
        return cls(domain, np.zeros(domain.size, dtype=np.int64), domain.width)

    @classmethod
    def scaled_indicator(cls, U: DenseSubset, b: DyadicRational) -> "Distribution":
        """``m = b * χ_U / 2^width``."""
        b = b if isinstance(b, DyadicRational) else DyadicRational.from_fraction(parse_rational(b))
        if not 0 <= b <= 1:
            raise UsageError("scale b must lie in [0, 1]")
        nums = U.members.astype(np.int64) * b.numerator
        return cls(U.universe, nums, U.width + b.log2_denominator)

    @property
    def width(self) -> int:
        return self.domain.width

    def mass(self, s: int) -> DyadicRational:
        return DyadicRational(int(self.numerators[s]), self.log2_denominator)

    def masses(self) -> list[DyadicRational]:
        return [DyadicRational(int(v), self.log2_denominator) for v in self.numerators]

    @property
    def total(self) -> DyadicRational:
        return DyadicRational(self._total, self.log2_denominator)

    @property
    def total_numerator(self) -> int:
        return self._total

    def support(self) -> DenseSubset:
        return DenseSubset(self.domain, self.numerators > 0)

    def check(self) -> bool:
        return self._total == int(self.numerators.sum()) and (
            (int(self.numerators.max()) << self.width) <= (1 << self.log2_denominator)
        )

    def __eq__(self, other):
        if not isinstance(other, Distribution) or other.width != self.width:
            return NotImplemented if not isinstance(other, Distribution) else False
        e = max(self.log2_denominator, other.log2_denominator)
        a = [int(v) << (e - self.log2_denominator) for v in self.numerators]
        b = [int(v) << (e - other.log2_denominator) for v in other.numerators]
        return a == b

    def __repr__(self):
        return f"Distribution(width={self.width}, total={self.total})"

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "masses": [list(m.as_pair()) for m in self.masses()],
            "total": fraction_json(self.total),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Distribution":
        dom = IndexSet(int(obj["width"]))
        d = cls.from_masses(dom, [DyadicRational(int(n), int(e)) for n, e in obj["masses"]])
        if "total" in obj and fraction_json(d.total) != list(obj["total"]):
            raise UsageError("total field disagrees with the masses")
        return d


def random_distribution(domain: IndexSet, granularity: int, rng: np.random.Generator) -> Distribution:
    """Masses ``j / 2^granularity`` with j uniform in ``[0, 2^(granularity-width)]``."""
    if granularity < domain.width:
        raise UsageError("granularity must be at least the width")
    top = 1 << (granularity - domain.width)
    return Distribution(domain, rng.integers(0, top + 1, size=domain.size), granularity)


def project_set_to_distribution(J: DenseSubset, prefix, blocks: Sequence[int] | None = None) -> Distribution:
    """``m(s) = |{t in J : t extends s}| / 2^|K|`` on the leading coordinates.

    ``prefix`` is the prefix width (or an IndexSet). When ``blocks`` lists the
    block widths of K, the prefix must end on a block boundary.
    """
    pw = prefix.width if isinstance(prefix, IndexSet) else int(prefix)
    if not 1 <= pw <= J.width:
        raise UsageError(f"prefix width {pw} not inside width {J.width}")
    if blocks is not None:
        if sum(blocks) != J.width:
            raise UsageError("block widths do not add up to the width of J")
        cuts = set(np.cumsum(blocks).tolist())
        if pw not in cuts:
            raise UsageError(f"prefix width {pw} is not aligned to blocks {list(blocks)}")
    counts = prefix_counts(J.members, pw)
    return Distribution(IndexSet(pw), counts, J.width)


def prefix_counts(members: np.ndarray, prefix_width: int) -> np.ndarray:
    """Number of members extending each prefix (prefix = low bits)."""
    return members.reshape(-1, 1 << prefix_width).sum(axis=0, dtype=np.int64)


# binning


def bin_count(delta: Fraction) -> int:
    """ℓ = ⌈1/δ⌉ (a single bin when δ >= 1)."""
    return max(1, math.ceil(1 / delta))


def bin_index(m: Distribution, delta) -> np.ndarray:
    """Bin i with iδ/2^w < m(s) <= (i+1)δ/2^w, or -1 for zero mass."""
    delta = parse_rational(delta)
    if delta <= 0:
        raise UsageError("delta must be positive")
    p, q = delta.numerator, delta.denominator
    # m·2^w/δ = num·q·2^w / (p·2^D)
    y = p << m.log2_denominator
    scale = q << m.width
    nums = m.numerators
    if int(nums.max(initial=0)) * scale + y < (1 << 62):
        x = nums * scale
        idx = (x + y - 1) // y - 1
    else:
        idx = np.array([(int(v) * scale + y - 1) // y - 1 for v in nums], dtype=np.int64)
    idx = np.where(nums > 0, idx, -1)
    return np.minimum(idx, bin_count(delta) - 1)


def level_sets(m: Distribution, delta) -> list[tuple[int, DenseSubset]]:
    """Bins ``(i, U_i)`` for 0 <= i < ℓ; zero-mass points belong to no bin."""
    delta = parse_rational(delta)
    idx = bin_index(m, delta)
    return [(i, DenseSubset(m.domain, idx == i)) for i in range(bin_count(delta))]


# T_m construction


class Theorem8Failure(ConstructionFailed):
    def __init__(self, bin_index: int, report: Prop2Report):
        super().__init__(
            f"bin {bin_index}: T_U density {report.T_U_density} not above {report.density_requirement}",
            bin=bin_index,
        )
        self.bin = bin_index
        self.report = report


@dataclass
class Theorem8Certificate:
    delta: Fraction
    ell: int
    kept_bins: list[int]
    bin_sizes: dict[int, int]
    discarded_mass: DyadicRational
    kept_mass: DyadicRational
    T_m: DenseSubset
    certified_error: Fraction
    ledger: dict
    headline_error: Fraction
    couplings_hold: bool
    total: DyadicRational
    total_binned: Fraction
    bin_delta: Fraction
    bin_threshold: Fraction
    bin_density_loss: Fraction
    contract_worst: Fraction = field(default=Fraction(0))

    @property
    def T_m_density(self) -> DyadicRational:
        return self.T_m.density()

    @property
    def binning_loss(self) -> Fraction:
        return self.total.to_fraction() - self.total_binned

    @property
    def meets_statement_density(self) -> bool:
        return self.T_m_density > 1 - self.delta

    def to_json(self, include_set: bool = True) -> dict:
        out = {
            "delta": fraction_json(self.delta),
            "ell": self.ell,
            "kept_bins": self.kept_bins,
            "bin_sizes": {str(k): v for k, v in sorted(self.bin_sizes.items())},
            "discarded_mass": fraction_json(self.discarded_mass),
            "kept_mass": fraction_json(self.kept_mass),
            "total": fraction_json(self.total),
            "total_binned": fraction_json(self.total_binned),
            "certified_error": fraction_json(self.certified_error),
            "headline_error": fraction_json(self.headline_error),
            "couplings_hold": self.couplings_hold,
            "ledger": {k: fraction_json(v) if not isinstance(v, bool) else v for k, v in self.ledger.items()},
            "bin_delta": fraction_json(self.bin_delta),
            "bin_threshold": fraction_json(self.bin_threshold),
            "bin_density_loss": fraction_json(self.bin_density_loss),
            "T_m_density": fraction_json(self.T_m_density),
            "meets_statement_density": self.meets_statement_density,
            "contract_worst": fraction_json(self.contract_worst),
        }
        if include_set:
            out["T_m"] = self.T_m.to_json()
        return out


def shifted_sums(m: Distribution, a0: DenseSubset) -> np.ndarray:
    """Numerators of ``Σ{m(t) : t ∈ a0 + s}`` for every s (denominator 2^D)."""
    if a0.width != m.width:
        raise UsageError("distribution and partition live in different cubes")
    return xor_correlate(m.numerators.astype(np.uint64), a0.members.astype(np.uint64), m.total_numerator)


def theorem8_construct(
    m: Distribution,
    p: Partition,
    delta,
    epsilon=None,
    bin_delta=None,
    bin_threshold=None,
    bin_density_loss=None,
) -> Theorem8Certificate:
    """Bin m into level sets, intersect their even-split sets, certify the error.

    Defaults follow the original regime: bins with density >= δ² are kept and
    each is split at tolerance δ³. Desk-scale callers may loosen both; the
    certified error is computed from whatever was actually used.
    """
    delta = parse_rational(delta)
    if delta <= 0:
        raise UsageError("delta must be positive")
    bin_delta = delta**3 if bin_delta is None else parse_rational(bin_delta)
    bin_threshold = delta**2 if bin_threshold is None else parse_rational(bin_threshold)
    bin_density_loss = bin_delta if bin_density_loss is None else parse_rational(bin_density_loss)
    if p.width != m.width:
        raise UsageError("distribution and partition live in different cubes")
    if m.total_numerator == 0:
        raise UsageError("zero distribution: total mass must be positive")
    if epsilon is not None and m.total < parse_rational(epsilon):
        raise UsageError(f"total mass {m.total} below epsilon {epsilon}")

    w = m.width
    n = 1 << w
    ell = bin_count(delta)
    idx = bin_index(m, delta)
    sizes = {i: int(np.count_nonzero(idx == i)) for i in range(ell)}
    kept = [i for i in range(ell) if sizes[i] > 0 and Fraction(sizes[i], n) >= bin_threshold]

    T = np.ones(n, dtype=bool)
    for i in kept:
        rep = compute_T_U(p, DenseSubset(m.domain, idx == i), bin_delta, density_loss=bin_density_loss)
        if not rep.passed:
            raise Theorem8Failure(i, rep)
        T &= rep.T_U.members
    T_m = DenseSubset(m.domain, T)

    kept_mask = np.isin(idx, kept)
    kept_num = int(m.numerators[kept_mask].sum())
    D = m.log2_denominator
    kept_mass = DyadicRational(kept_num, D)
    discarded = DyadicRational(m.total_numerator - kept_num, D)
    total_binned = sum((Fraction(sizes[i] * i) * delta / n for i in kept), Fraction(0))
    binning_loss = m.total.to_fraction() - total_binned
    weight_sum = sum((i * delta for i in kept), Fraction(0))
    clause2_slack = bin_delta * weight_sum
    certified = binning_loss / 2 + clause2_slack
    couplings = bin_delta <= delta**3 and bin_threshold >= delta**2 and bin_density_loss <= delta**3
    ledger = {
        "binning_loss": binning_loss,
        "binning_loss_half": binning_loss / 2,
        "clause2_slack": clause2_slack,
        "clause2_slack_cap": bin_delta * len(kept),
        "binning_loss_within_2delta": binning_loss <= 2 * delta,
    }
    cert = Theorem8Certificate(
        delta=delta,
        ell=ell,
        kept_bins=kept,
        bin_sizes=sizes,
        discarded_mass=discarded,
        kept_mass=kept_mass,
        T_m=T_m,
        certified_error=certified,
        ledger=ledger,
        headline_error=3 * delta,
        couplings_hold=couplings,
        total=m.total,
        total_binned=total_binned,
        bin_delta=bin_delta,
        bin_threshold=bin_threshold,
        bin_density_loss=bin_density_loss,
    )
    # return contract: every s ∈ T_m meets the certified error
    if T_m.cardinality:
        sums = shifted_sums(m, p.a0)[T]
        worst = int(np.abs(2 * sums - m.total_numerator).max())
        cert.contract_worst = Fraction(worst, 1 << (D + 1))
        if cert.contract_worst > certified:
            raise ConstructionFailed(
                "certified error does not cover the measured deviation",
                measured=cert.contract_worst,
                certified=certified,
            )
    return cert


@dataclass
class ConclusionReport:
    checked: int
    worst_shift: int | None
    worst_deviation: Fraction
    bound: Fraction
    passed: bool

    def to_json(self) -> dict:
        return {
            "checked": self.checked,
            "worst_shift": self.worst_shift,
            "worst_deviation": fraction_json(self.worst_deviation),
            "bound": fraction_json(self.bound),
            "pass": self.passed,
        }


def verify_distribution_conclusion(m: Distribution, p: Partition, T: DenseSubset, bound) -> ConclusionReport:
    """Direct sweep: for each s ∈ T, | Σ{m(t) : t ∈ a0+s} − m̄/2 | <= bound."""
    bound = parse_rational(bound)
    if T.width != m.width or p.width != m.width:
        raise UsageError("width mismatch")
    a0_pts = p.a0.points().astype(np.int64)
    nums = m.numerators
    tot = m.total_numerator
    worst = -1
    worst_s = None
    for s in T.points():
        dev = abs(2 * int(nums[a0_pts ^ int(s)].sum()) - tot)
        if dev > worst:
            worst, worst_s = dev, int(s)
    worst_dev = Fraction(max(worst, 0), 1 << (m.log2_denominator + 1))
    return ConclusionReport(T.cardinality, worst_s, worst_dev, bound, worst_dev <= bound)
