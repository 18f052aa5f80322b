"""Product-set shift estimates for a subset J of a block slice.

For a slice K = I_k ∪ … ∪ I_{k+n} and J ⊆ 2^K, build T_J ⊆ 2^K such that for
every s ∈ T_J and every side pattern t ∈ 2^{n+1},

    | |(J+s) ∩ ∏_j a^{t(j)}_{k+j}| / |∏_j a^{t(j)}_{k+j}| − |J|/2^|K| |

is at most an exactly accumulated error. J is first trimmed so every
surviving prefix is heavy, then the prefix distributions m_i are handled
block by block with the binned T_m construction.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .distribution import (
    Distribution,
    Theorem8Certificate,
    prefix_counts,
    theorem8_construct,
)
from .dyadic import DyadicRational, fraction_json, parse_rational
from .errors import BudgetExceeded, ConstructionFailed, UsageError
from .hypercube import DenseSubset, IndexSet
from .tower import BlockTower, product_mask
from .walsh import subset_correlation


@dataclass(frozen=True)
class BlockSlice:
    tower: BlockTower
    start: int
    n: int

    def __post_init__(self):
        if self.start < 0 or self.n < 0 or self.start + self.n >= self.tower.depth:
            raise UsageError(f"slice {self.start}..{self.start + self.n} outside tower of depth {self.tower.depth}")

    @property
    def blocks(self) -> range:
        return range(self.start, self.start + self.n + 1)

    @property
    def widths(self) -> list[int]:
        return [self.tower.widths[j] for j in self.blocks]

    @property
    def width(self) -> int:
        return sum(self.widths)

    def prefix_width(self, i: int) -> int:
        """|I_k ∪ … ∪ I_{k+i}|."""
        return sum(self.widths[: i + 1])

    @property
    def universe(self) -> IndexSet:
        return IndexSet(self.width)

    def partition(self, j: int):
        return self.tower.partitions[self.start + j]

    def patterns(self) -> list[tuple[int, ...]]:
        return list(itertools.product((0, 1), repeat=self.n + 1))

    def product_sides(self, pattern: Sequence[int]) -> list[DenseSubset]:
        return [self.partition(j).side(pattern[j]) for j in range(self.n + 1)]

    def product_size(self, pattern: Sequence[int]) -> int:
        return functools.reduce(lambda a, s: a * s.cardinality, self.product_sides(pattern), 1)

    def product_mask(self, pattern: Sequence[int]) -> np.ndarray:
        return product_mask(self.product_sides(pattern))

    def offset_in_tower(self) -> int:
        return self.tower.offsets[self.start]


@dataclass(frozen=True)
class StageParams:
    """Per-block parameters: trim threshold ε and the binned construction's knobs."""

    epsilon: Fraction
    delta: Fraction
    bin_delta: Fraction | None = None
    bin_threshold: Fraction | None = None
    bin_density_loss: Fraction | None = None

    def __post_init__(self):
        for name in ("epsilon", "delta", "bin_delta", "bin_threshold", "bin_density_loss"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, parse_rational(v))

    def to_json(self) -> dict:
        return {
            k: (fraction_json(v) if v is not None else None)
            for k, v in self.__dict__.items()
        }


def tower_stage_params(sl: BlockSlice, **knobs) -> list[StageParams]:
    return [StageParams(sl.tower.specs[j].epsilon, sl.tower.specs[j].delta, **knobs) for j in sl.blocks]


def _check_J(J: DenseSubset, sl: BlockSlice) -> None:
    if J.width != sl.width:
        raise UsageError(f"J has width {J.width}, slice has width {sl.width}")


def level_distribution(J: DenseSubset, sl: BlockSlice, i: int) -> Distribution:
    """m_i(s) = |{t ∈ J : t extends s}| / 2^|K| on the first i+1 blocks."""
    _check_J(J, sl)
    if not 0 <= i <= sl.n:
        raise UsageError(f"level {i} outside 0..{sl.n}")
    pw = sl.prefix_width(i)
    return Distribution(IndexSet(pw), prefix_counts(J.members, pw), sl.width)


def conditional_distribution(m_next: Distribution, t: int, prefix_width: int) -> Distribution:
    """m^t(s) = 2^|prefix| · m_next(t⌢s) on the block following the prefix."""
    w = m_next.width - prefix_width
    if w < 1:
        raise UsageError("no block after the prefix")
    if not 0 <= t < 1 << prefix_width:
        raise UsageError("prefix point out of range")
    nums = m_next.numerators.reshape(1 << w, 1 << prefix_width)[:, t]
    return Distribution(IndexSet(w), nums, m_next.log2_denominator - prefix_width)


# trimming


@dataclass
class TrimResult:
    J_trimmed: DenseSubset
    removed_mass: DyadicRational
    removed_count: int
    per_level_removed: list[DyadicRational]
    fixpoint_rounds: int
    budget: Fraction
    within_trim_budget: bool
    ordering_ok: bool

    def to_json(self) -> dict:
        return {
            "removed_mass": fraction_json(self.removed_mass),
            "removed_count": self.removed_count,
            "per_level_removed": [fraction_json(v) for v in self.per_level_removed],
            "fixpoint_rounds": self.fixpoint_rounds,
            "budget_sum_eps": fraction_json(self.budget),
            "within_trim_budget": self.within_trim_budget,
            "ordering_ok": self.ordering_ok,
        }


def _light(counts: np.ndarray, eps: Fraction, shift: int) -> np.ndarray:
    # 0 < count/2^|K| < eps/2^P  <=>  0 < count·q < p·2^(|K|-P)
    return (counts > 0) & (counts * eps.denominator < eps.numerator << shift)


def is_trimmed(J: DenseSubset, sl: BlockSlice, eps: Sequence[Fraction]) -> bool:
    for i in range(sl.n + 1):
        pw = sl.prefix_width(i)
        if _light(prefix_counts(J.members, pw), eps[i], sl.width - pw).any():
            return False
    return True


def trim(J: DenseSubset, sl: BlockSlice, eps: Sequence) -> TrimResult:
    """Remove light prefixes (and all their extensions) until none remain.

    Levels are swept deepest first; rounds repeat until a round removes
    nothing.
    """
    _check_J(J, sl)
    eps = [parse_rational(e) for e in eps]
    if len(eps) != sl.n + 1:
        raise UsageError(f"need {sl.n + 1} epsilon values, got {len(eps)}")
    arr = J.members.copy()
    removed_per = [0] * (sl.n + 1)
    rounds = 0
    while True:
        changed = False
        for i in range(sl.n, -1, -1):
            pw = sl.prefix_width(i)
            view = arr.reshape(-1, 1 << pw)
            counts = view.sum(axis=0, dtype=np.int64)
            light = _light(counts, eps[i], sl.width - pw)
            if light.any():
                removed_per[i] += int(counts[light].sum())
                view[:, light] = False
                changed = True
        if not changed:
            break
        rounds += 1
    out = DenseSubset(J.universe, arr)
    removed = J.cardinality - out.cardinality
    budget = sum(eps, Fraction(0))
    return TrimResult(
        J_trimmed=out,
        removed_mass=DyadicRational(removed, sl.width),
        removed_count=removed,
        per_level_removed=[DyadicRational(r, sl.width) for r in removed_per],
        fixpoint_rounds=rounds,
        budget=budget,
        within_trim_budget=Fraction(removed, 1 << sl.width) < 2 * eps[0],
        ordering_ok=all(eps[i + 1] <= eps[i] / 2 for i in range(sl.n)),
    )


# construction


@dataclass
class LedgerEntry:
    stage: int
    nominal_term: Fraction
    halved_carry: Fraction
    stage_term: Fraction
    error: Fraction
    headline: Fraction | None
    live_prefixes: int
    stage_density: DyadicRational
    max_component_error: Fraction

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "nominal_term": fraction_json(self.nominal_term),
            "halved_carry": fraction_json(self.halved_carry),
            "stage_term": fraction_json(self.stage_term),
            "error": fraction_json(self.error),
            "headline": fraction_json(self.headline) if self.headline is not None else None,
            "live_prefixes": self.live_prefixes,
            "stage_density": fraction_json(self.stage_density),
            "max_component_error": fraction_json(self.max_component_error),
        }


@dataclass
class ErrorLedger:
    entries: list[LedgerEntry]
    pattern_bounds: dict[tuple[int, ...], Fraction]
    balance_terms: dict[tuple[int, ...], Fraction]
    trim_terms: dict[tuple[int, ...], Fraction]

    @property
    def final_mass_error(self) -> Fraction:
        return self.entries[-1].error if self.entries else Fraction(0)

    @property
    def bound(self) -> Fraction:
        return max(self.pattern_bounds.values())

    def density_product(self) -> Fraction:
        out = Fraction(1)
        for e in self.entries:
            out *= e.stage_density.to_fraction()
        return out

    def to_json(self) -> dict:
        key = lambda p: "".join(map(str, p))
        return {
            "entries": [e.to_json() for e in self.entries],
            "pattern_bounds": {key(p): fraction_json(v) for p, v in sorted(self.pattern_bounds.items())},
            "balance_terms": {key(p): fraction_json(v) for p, v in sorted(self.balance_terms.items())},
            "trim_terms": {key(p): fraction_json(v) for p, v in sorted(self.trim_terms.items())},
            "bound": fraction_json(self.bound),
        }


@dataclass
class TJCertificate:
    T_J: DenseSubset
    ledger: ErrorLedger
    trim: TrimResult
    verified_all_t: bool
    J_density: DyadicRational
    slice_start: int
    slice_n: int
    worst: "TJVerifyReport | None" = None
    params: list[StageParams] = field(default_factory=list)

    @property
    def density(self) -> DyadicRational:
        return self.T_J.density()

    @property
    def bound(self) -> Fraction:
        return self.ledger.bound

    def bound_for(self, pattern: Sequence[int]) -> Fraction:
        return self.ledger.pattern_bounds[tuple(pattern)]

    def to_json(self, include_set: bool = True) -> dict:
        out = {
            "slice": {"start": self.slice_start, "n": self.slice_n},
            "J_density": fraction_json(self.J_density),
            "T_J_density": fraction_json(self.density),
            "density_ledger": fraction_json(self.ledger.density_product()),
            "ledger": self.ledger.to_json(),
            "trim": self.trim.to_json(),
            "verified_all_t": self.verified_all_t,
            "params": [p.to_json() for p in self.params],
        }
        if self.worst is not None:
            out["verification"] = self.worst.to_json()
        if include_set:
            out["T_J"] = self.T_J.to_json()
        return out


class LemmaStageFailure(ConstructionFailed):
    def __init__(self, stage: int, prefix: int | None, cause: Exception):
        super().__init__(f"stage {stage}, prefix {prefix}: {cause}", stage=stage, prefix=prefix)
        self.stage = stage
        self.prefix = prefix
        self.cause = cause


def _construct(m: Distribution, part, params: StageParams, stage: int, prefix) -> Theorem8Certificate:
    try:
        return theorem8_construct(
            m,
            part,
            params.delta,
            bin_delta=params.bin_delta,
            bin_threshold=params.bin_threshold,
            bin_density_loss=params.bin_density_loss,
        )
    except (ConstructionFailed, UsageError) as exc:
        raise LemmaStageFailure(stage, prefix, exc) from exc


def build_T_J(
    J: DenseSubset,
    sl: BlockSlice,
    params: Sequence[StageParams] | None = None,
    verify: bool = True,
    budget: int | None = None,
) -> TJCertificate:
    """Trim J, run the block-by-block induction, and certify every side pattern."""
    _check_J(J, sl)
    if budget is not None and tj_work(sl) > budget:
        raise BudgetExceeded("T_J construction", tj_work(sl), budget)
    params = list(params) if params is not None else tower_stage_params(sl)
    if len(params) != sl.n + 1:
        raise UsageError(f"need {sl.n + 1} stage parameter sets")
    if J.cardinality == 0:
        raise UsageError("J must be non-empty")
    tr = trim(J, sl, [p.epsilon for p in params])
    Jt = tr.J_trimmed
    K = sl.width
    tower = sl.tower
    prev_delta = tower.specs[sl.start - 1].delta if sl.start >= 1 else None
    entries: list[LedgerEntry] = []

    if Jt.cardinality == 0:
        T = np.ones(1 << K, dtype=bool)
        err = Fraction(0)
    else:
        m0 = level_distribution(Jt, sl, 0)
        c0 = _construct(m0, sl.partition(0), params[0], 0, None)
        T = c0.T_m.members.copy()
        err = c0.certified_error
        entries.append(
            LedgerEntry(
                stage=0,
                nominal_term=params[0].delta,
                halved_carry=Fraction(0),
                stage_term=err,
                error=err,
                headline=prev_delta,
                live_prefixes=1,
                stage_density=c0.T_m_density,
                max_component_error=err,
            )
        )
        counts_i = prefix_counts(Jt.members, sl.prefix_width(0))
        for i in range(sl.n):
            pw = sl.prefix_width(i)
            m_next = level_distribution(Jt, sl, i + 1)
            w_next = sl.widths[i + 1]
            part = sl.partition(i + 1)
            inter = np.ones(1 << w_next, dtype=bool)
            e_max = Fraction(0)
            live = np.flatnonzero(counts_i)
            for t in live:
                mt = conditional_distribution(m_next, int(t), pw)
                ct = _construct(mt, part, params[i + 1], i + 1, int(t))
                inter &= ct.T_m.members
                e_max = max(e_max, ct.certified_error)
            # worst count of prefixes in ∏_{j<=i} (a^{t(j)} + s_j), times 2^-|prefix|
            widest = functools.reduce(
                lambda a, j: a * max(sl.partition(j).a0.cardinality, sl.partition(j).a1.cardinality),
                range(i + 1),
                1,
            )
            term = Fraction(widest, 1 << pw) * e_max
            carry = err / 2
            err = carry + term
            T = np.kron(inter, T).astype(bool)
            entries.append(
                LedgerEntry(
                    stage=i + 1,
                    nominal_term=(1 << pw) * params[i + 1].delta,
                    halved_carry=carry,
                    stage_term=term,
                    error=err,
                    headline=prev_delta / 2 ** (i + 2) if prev_delta is not None else None,
                    live_prefixes=int(live.size),
                    stage_density=DyadicRational(int(inter.sum()), w_next),
                    max_component_error=e_max,
                )
            )
            counts_i = prefix_counts(Jt.members, sl.prefix_width(i + 1))

    T_J = DenseSubset(sl.universe, T)
    M_t = Fraction(Jt.cardinality, 1 << K)
    rho = Fraction(tr.removed_count, 1 << K)
    bounds, bal_terms, trim_terms = {}, {}, {}
    for pat in sl.patterns():
        P = sl.product_size(pat)
        bal = M_t * abs(Fraction(1, 2 ** (sl.n + 1)) - Fraction(P, 1 << K))
        core = Fraction(1 << K, P) * (err + bal)
        # |(R+s) ∩ P|/|P| − ρ lies in [−ρ, min(|R|,|P|)/|P| − ρ]
        tslack = max(rho, Fraction(min(tr.removed_count, P), P) - rho)
        bounds[pat] = core + tslack
        bal_terms[pat] = bal
        trim_terms[pat] = tslack
    ledger = ErrorLedger(entries, bounds, bal_terms, trim_terms)
    cert = TJCertificate(
        T_J=T_J,
        ledger=ledger,
        trim=tr,
        verified_all_t=False,
        J_density=J.density(),
        slice_start=sl.start,
        slice_n=sl.n,
        params=params,
    )
    if verify:
        rep = verify_TJ(J, sl, T_J, bounds, "all")
        cert.worst = rep
        cert.verified_all_t = rep.passed
    return cert


# verification


def tj_work(sl: BlockSlice) -> int:
    """Point-operations of one all-pattern sweep over the slice cube."""
    K = sl.width
    return (1 << (sl.n + 1)) * (1 << K) * (3 * K + 4)


@dataclass
class TJVerifyReport:
    checked_shifts: int
    patterns: list[tuple[int, ...]]
    worst_shift: int | None
    worst_pattern: tuple[int, ...] | None
    worst_deviation: Fraction
    per_pattern: dict[tuple[int, ...], tuple[int | None, Fraction, Fraction]]
    passed: bool

    def to_json(self) -> dict:
        key = lambda p: "".join(map(str, p))
        return {
            "checked_shifts": self.checked_shifts,
            "patterns": [key(p) for p in self.patterns],
            "worst_shift": self.worst_shift,
            "worst_pattern": key(self.worst_pattern) if self.worst_pattern is not None else None,
            "worst_deviation": fraction_json(self.worst_deviation),
            "per_pattern": {
                key(p): {"worst_shift": s, "worst_deviation": fraction_json(d), "bound": fraction_json(b)}
                for p, (s, d, b) in sorted(self.per_pattern.items())
            },
            "pass": self.passed,
        }


def shift_deviation_numerators(J: DenseSubset, P_mask: np.ndarray) -> np.ndarray:
    """|c_s·2^|K| − |J|·|P||, where c_s = |(J+s) ∩ P|; denominator |P|·2^|K|."""
    K = J.width
    c = subset_correlation(P_mask, J.members)
    P = int(P_mask.sum())
    return np.abs((c << K) - J.cardinality * P)


def verify_TJ(
    J: DenseSubset, sl: BlockSlice, T: DenseSubset, bound, patterns="all", budget: int | None = None
) -> TJVerifyReport:
    """Worst normalized deviation over s ∈ T and the requested side patterns.

    ``bound`` is one rational or a mapping pattern -> rational.
    """
    _check_J(J, sl)
    if budget is not None and tj_work(sl) > budget:
        raise BudgetExceeded("T_J verification", tj_work(sl), budget)
    if T.width != sl.width:
        raise UsageError("T must live on the slice cube")
    pats = sl.patterns() if patterns == "all" else [tuple(p) for p in patterns]
    K = sl.width
    per = {}
    worst = (Fraction(-1), None, None)
    ok = True
    Tm = T.members
    for pat in pats:
        b = parse_rational(bound[pat] if isinstance(bound, dict) else bound)
        P_mask = sl.product_mask(pat)
        P = int(P_mask.sum())
        if T.cardinality == 0:
            per[pat] = (None, Fraction(0), b)
            continue
        devs = shift_deviation_numerators(J, P_mask)
        devs = np.where(Tm, devs, -1)
        s = int(np.argmax(devs))
        d = Fraction(int(devs[s]), P << K)
        per[pat] = (s, d, b)
        ok &= d <= b
        if d > worst[0]:
            worst = (d, s, pat)
    wd = max(worst[0], Fraction(0))
    return TJVerifyReport(T.cardinality, pats, worst[1], worst[2], wd, per, ok)


# J^{x,z} summability


@dataclass
class JXZReport:
    ratios: list[Fraction]
    partial_sums: list[Fraction]
    densities: list[DyadicRational]
    normalized: list[bool]
    in_T: list[bool | None]
    bound_ok: list[bool | None]
    bounds: list[Fraction | None]

    @property
    def passed(self) -> bool:
        return all(b is not False for b in self.bound_ok)

    def to_json(self) -> dict:
        return {
            "ratios": [fraction_json(r) for r in self.ratios],
            "partial_sums": [fraction_json(r) for r in self.partial_sums],
            "densities": [fraction_json(d) for d in self.densities],
            "normalized": self.normalized,
            "z_in_T": self.in_T,
            "bounds": [fraction_json(b) if b is not None else None for b in self.bounds],
            "bound_ok": self.bound_ok,
            "pass": self.passed,
        }


def jxz_summability(
    tower: BlockTower,
    groups: Sequence[tuple[int, int]],
    J_list: Sequence[DenseSubset],
    z: int,
    x: Sequence[int],
    certificates: Sequence[TJCertificate | None] | None = None,
    normalization: str = "report",
) -> JXZReport:
    """Ratios r_n = |(J_n + z↾K_n) ∩ ∏_j a^{x(j)}_j| / |∏_j a^{x(j)}_j| and partial sums.

    ``groups`` are half-open block ranges [k_n, k_{n+1}) that must tile the
    first N blocks. With ``normalization="enforce"`` every |J_n|/2^|K_n|
    must equal 2^-n.
    """
    if len(groups) != len(J_list):
        raise UsageError("one J per group")
    if not groups or groups[0][0] != 0 or any(groups[i][1] != groups[i + 1][0] for i in range(len(groups) - 1)):
        raise UsageError("groups must be consecutive block ranges starting at block 0")
    N = groups[-1][1]
    if N > tower.depth:
        raise UsageError("groups run past the tower")
    x = tuple(int(b) for b in x)
    if len(x) < N:
        raise UsageError("x must assign a side to every block in the groups")
    certificates = list(certificates) if certificates is not None else [None] * len(groups)
    ratios, sums, dens, norm, in_T, ok, bds = [], [], [], [], [], [], []
    total = Fraction(0)
    for g, ((a, b), J) in enumerate(zip(groups, J_list)):
        sl = BlockSlice(tower, a, b - a - 1)
        _check_J(J, sl)
        lo = tower.offsets[a]
        zK = (int(z) >> lo) & ((1 << sl.width) - 1)
        pat = x[a:b]
        P_mask = sl.product_mask(pat)
        idx = np.arange(1 << sl.width, dtype=np.int64)
        inter = int(np.count_nonzero(J.members[idx ^ zK] & P_mask))
        r = Fraction(inter, int(P_mask.sum()))
        total += r
        ratios.append(r)
        sums.append(total)
        d = J.density()
        dens.append(d)
        is_norm = d == Fraction(1, 2**g)
        if normalization == "enforce" and not is_norm:
            raise UsageError(f"group {g}: |J|/2^|K| = {d}, expected 2^-{g}")
        norm.append(is_norm)
        cert = certificates[g]
        if cert is None:
            in_T.append(None)
            ok.append(None)
            bds.append(None)
            continue
        member = zK in cert.T_J
        in_T.append(member)
        if member:
            bound = d.to_fraction() + cert.bound_for(pat)
            bds.append(bound)
            ok.append(r <= bound)
        else:
            bds.append(None)
            ok.append(None)
    return JXZReport(ratios, sums, dens, norm, in_T, ok, bds)
