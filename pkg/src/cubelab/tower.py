"""Block towers, the block-membership map F, fibers, and the covering machinery.

A tower of depth N lives on 2^W with W = Σ|I_n|. Block n occupies the bits
``[offset(n), offset(n+1))`` of a point, block 0 lowest, so a prefix
``t ∈ 2^{I_0 ∪ … ∪ I_{n-1}}`` is the low ``offset(n)`` bits and
``t⌢s = t | s << offset(n)``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .dyadic import DyadicRational, fraction_json, fraction_from_json, parse_rational
from .errors import BudgetExceeded, UsageError
from .hypercube import DenseSubset, IndexSet, Partition, point_to_string
from .partition import DEFAULT_BUDGET, PartitionSearchExhausted, find_partition
from .walsh import subset_correlation


@dataclass(frozen=True)
class BlockSpec:
    width: int
    k: int
    epsilon: Fraction
    delta: Fraction
    mode: str = "balanced"

    def __post_init__(self):
        object.__setattr__(self, "epsilon", parse_rational(self.epsilon))
        object.__setattr__(self, "delta", parse_rational(self.delta))

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "k": self.k,
            "epsilon": fraction_json(self.epsilon),
            "delta": fraction_json(self.delta),
            "mode": self.mode,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BlockSpec":
        return cls(
            int(obj["width"]),
            int(obj["k"]),
            fraction_from_json(obj["epsilon"]),
            fraction_from_json(obj["delta"]),
            obj.get("mode", "balanced"),
        )


def reference_schedule(n: int) -> tuple[int, Fraction]:
    """``(k_n, δ_n) = (2^(n+3), 4^(-n-3))``."""
    return 2 ** (n + 3), Fraction(1, 4 ** (n + 3))


@dataclass
class Condition:
    name: str
    block: int
    holds: bool
    detail: str

    def to_json(self) -> dict:
        return {"name": self.name, "block": self.block, "holds": self.holds, "detail": self.detail}


class TowerBuildFailed(PartitionSearchExhausted):
    def __init__(self, block: int, inner: PartitionSearchExhausted):
        super().__init__(len(inner.log), inner.tally, inner.log)
        self.block = block
        self.args = (f"block {block}: {inner}",)


class BlockTower:
    def __init__(self, specs: Sequence[BlockSpec], partitions: Sequence[Partition], attempts=None, seed=None):
        if len(specs) != len(partitions) or not specs:
            raise UsageError("need one partition per block and at least one block")
        for s, p in zip(specs, partitions):
            if s.width != p.width:
                raise UsageError("partition width disagrees with its block spec")
        self.specs = list(specs)
        self.partitions = list(partitions)
        self.attempts = list(attempts) if attempts is not None else [None] * len(specs)
        self.seed = seed
        widths = [s.width for s in specs]
        self.offsets = [0]
        for w in widths:
            self.offsets.append(self.offsets[-1] + w)
        if self.total_width > 62:
            raise UsageError("tower too wide for integer points")
        self.constraint_report = evaluate_constraints(self)

    @property
    def depth(self) -> int:
        return len(self.specs)

    @property
    def widths(self) -> list[int]:
        return [s.width for s in self.specs]

    @property
    def total_width(self) -> int:
        return self.offsets[-1]

    def block_interval(self, n: int) -> tuple[int, int]:
        """Coordinates of block n as a half-open interval."""
        return self.offsets[n], self.offsets[n + 1]

    def restrict(self, x: int, n: int) -> int:
        lo, hi = self.block_interval(n)
        return (x >> lo) & ((1 << (hi - lo)) - 1)

    def side(self, n: int, i: int) -> DenseSubset:
        return self.partitions[n].side(i)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "blocks": [
                {
                    "width": s.width,
                    "schedule": s.to_json(),
                    "partition": p.to_json(),
                    "attempts": a,
                }
                for s, p, a in zip(self.specs, self.partitions, self.attempts)
            ],
            "constraint_report": [c.to_json() for c in self.constraint_report],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BlockTower":
        specs = [BlockSpec.from_json(b["schedule"]) for b in obj["blocks"]]
        parts = [Partition.from_json(b["partition"]) for b in obj["blocks"]]
        return cls(specs, parts, [b.get("attempts") for b in obj["blocks"]], obj.get("seed"))

    def __eq__(self, other):
        return (
            isinstance(other, BlockTower)
            and self.specs == other.specs
            and self.partitions == other.partitions
        )


def _block_seed(seed: int, n: int) -> int:
    state = np.random.SeedSequence([int(seed), 0x746F776572, n]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def build_tower(
    specs: Sequence[BlockSpec],
    seed: int = 0,
    max_tries: int = 20,
    budget: int = DEFAULT_BUDGET,
) -> BlockTower:
    """Find each block's partition (clause 1 at (k_n, δ_n)) and evaluate side conditions.

    Side conditions are reported, never enforced.
    """
    specs = [s if isinstance(s, BlockSpec) else BlockSpec(*s) for s in specs]
    parts, attempts = [], []
    for n, s in enumerate(specs):
        try:
            res = find_partition(
                IndexSet(s.width, label=f"I_{n}"),
                s.k,
                s.delta,
                mode=s.mode,
                max_tries=max_tries,
                seed=_block_seed(seed, n),
                budget=budget,
            )
        except PartitionSearchExhausted as exc:
            raise TowerBuildFailed(n, exc) from exc
        parts.append(res.partition)
        attempts.append(res.attempts)
    return BlockTower(specs, parts, attempts, seed)


def evaluate_constraints(t: BlockTower) -> list[Condition]:
    out = []
    for n, s in enumerate(t.specs):
        prefix = t.offsets[n]
        k_n, d_n = reference_schedule(n)
        out.append(Condition("schedule_k", n, s.k == k_n, f"k={s.k}, formula 2^(n+3)={k_n}"))
        out.append(Condition("schedule_delta", n, s.delta == d_n, f"delta={s.delta}, formula 4^(-n-3)={d_n}"))
        if n >= 1:
            need = 4 ** (n + 9) * 2**prefix
            out.append(Condition("growth", n, s.width >= need, f"|I_n|={s.width} vs 4^(n+9)*2^{prefix}={need}"))
            lo_prev, hi_prev = t.block_interval(n - 1)
            lo, _ = t.block_interval(n)
            out.append(Condition("order", n, lo >= hi_prev - 1, f"min(I_n)={lo} >= max(I_n-1)={hi_prev - 1}"))
        p = t.partitions[n]
        out.append(Condition("nondegenerate", n, p.nondegenerate, f"|a0|={p.a0.cardinality}"))
        out.append(Condition("balanced", n, p.balanced, f"|a0|={p.a0.cardinality}, 2^(w-1)={1 << (s.width - 1)}"))
        # 2^|I_0..I_{n-1}| δ_n < ε_n < 2^-(n-1)
        lower = 2**prefix * s.delta
        upper = Fraction(2) ** (1 - n)
        out.append(
            Condition(
                "delta_epsilon_window",
                n,
                lower < s.epsilon < upper,
                f"{lower} < eps={s.epsilon} < {upper}",
            )
        )
        if n >= 1:
            prev = t.specs[n - 1]
            lhs = 2**prefix * s.epsilon
            out.append(
                Condition("epsilon_delta_chain", n, lhs < prev.delta, f"{lhs} < delta_(n-1)={prev.delta}")
            )
        q = 2 ** (n + 2)
        chain_lhs = 1 - Fraction(1, 2 ** (n + 10)) - Fraction(1, 4 ** (n + 3))
        chain_rhs = Fraction(q - 2, q - 1)
        out.append(Condition("z_chain_arithmetic", n, chain_lhs >= chain_rhs, f"{chain_lhs} >= {chain_rhs}"))
    return out


# F and fibers


def F_eval(t: BlockTower, x: int) -> tuple[int, ...]:
    """``y(n) = 0`` iff the restriction of x to block n lies in a0_n."""
    x = int(x)
    if not 0 <= x < 1 << t.total_width:
        raise UsageError(f"point {x} does not span exactly {t.depth} blocks")
    return tuple(0 if t.restrict(x, n) in t.partitions[n].a0 else 1 for n in range(t.depth))


def F_all(t: BlockTower) -> np.ndarray:
    """F as an integer array over 2^W; bit n of the value is y(n)."""
    pts = np.arange(1 << t.total_width, dtype=np.int64)
    y = np.zeros_like(pts)
    for n in range(t.depth):
        lo, hi = t.block_interval(n)
        r = (pts >> lo) & ((1 << (hi - lo)) - 1)
        y |= (~t.partitions[n].a0.members[r]).astype(np.int64) << n
    return y


def y_from_bits(bits) -> tuple[int, ...]:
    if isinstance(bits, str):
        return tuple(int(c) for c in bits)
    return tuple(int(b) for b in bits)


def product_mask(sides: Sequence[DenseSubset]) -> np.ndarray:
    """Membership of ∏ sides over the concatenated cube, block 0 lowest."""
    return functools.reduce(lambda acc, s: np.kron(s.members, acc), sides[1:], sides[0].members).astype(bool)


@dataclass
class Fiber:
    y: tuple[int, ...]
    sides: list[DenseSubset]
    total_width: int

    @property
    def cardinality(self) -> int:
        return functools.reduce(lambda a, s: a * s.cardinality, self.sides, 1)

    def mask(self) -> DenseSubset:
        return DenseSubset(IndexSet(self.total_width), product_mask(self.sides))

    def measure(self, S) -> Fraction:
        """μ_y(S) = |S ∩ fiber| / |fiber|; S is a subset of the cube or a list of block sets."""
        if isinstance(S, DenseSubset):
            inter = int(np.count_nonzero(S.members & product_mask(self.sides)))
            return Fraction(inter, self.cardinality)
        if len(S) != len(self.sides):
            raise UsageError("product set must have one factor per block")
        num = 1
        for f, side in zip(S, self.sides):
            num *= (f & side).cardinality
        return Fraction(num, self.cardinality)


def fiber(t: BlockTower, y) -> Fiber:
    y = y_from_bits(y)
    if len(y) != t.depth:
        raise UsageError("y must have one bit per block")
    return Fiber(y, [t.side(n, y[n]) for n in range(t.depth)], t.total_width)


# covering machinery


class CylinderUnion:
    """A union of cylinders, stored extensionally at full tower depth."""

    def __init__(self, tower: BlockTower, members: DenseSubset):
        if members.width != tower.total_width:
            raise UsageError("CylinderUnion must live on the full tower cube")
        self.depth = tower.depth
        self.members = members

    @classmethod
    def from_cylinders(cls, tower: BlockTower, cylinders: Sequence[tuple[int, int]]) -> "CylinderUnion":
        """Union of [t] for (d, t): t a point of the first d blocks."""
        W = tower.total_width
        pts = np.arange(1 << W, dtype=np.int64)
        arr = np.zeros(1 << W, dtype=bool)
        for d, pref in cylinders:
            if not 0 <= d <= tower.depth:
                raise UsageError("cylinder depth out of range")
            mask = (1 << tower.offsets[d]) - 1
            arr |= (pts & mask) == pref
        return cls(tower, DenseSubset(IndexSet(W), arr))

    def measure(self) -> DyadicRational:
        return self.members.density()

    def to_json(self) -> dict:
        return {"depth": self.depth, "members": self.members.to_json()}

    @classmethod
    def from_json(cls, tower: BlockTower, obj: dict) -> "CylinderUnion":
        return cls(tower, DenseSubset.from_json(obj["members"]))


def _fiber_cylinder(tower: BlockTower, rng: np.random.Generator, pts: np.ndarray) -> np.ndarray:
    """Translate of ∏_{j<d} a^{i_j}_j extended to full depth, for random d."""
    d = int(rng.integers(1, tower.depth + 1))
    out = np.ones(pts.size, dtype=bool)
    for j in range(d):
        lo, hi = tower.block_interval(j)
        v = int(rng.integers(0, 1 << (hi - lo)))
        side = tower.side(j, int(rng.integers(0, 2))).members
        out &= side[((pts >> lo) & ((1 << (hi - lo)) - 1)) ^ v]
    return out


def random_cylinder_union(tower: BlockTower, rng: np.random.Generator, max_measure=Fraction(1, 2)) -> CylinderUnion:
    """Random union of basic cylinders and translated fiber-cylinders.

    The measure never exceeds ``max_measure``. Fiber-cylinders make
    inclusions F^-1(y) ⊆ U + z actually occur.
    """
    max_measure = parse_rational(max_measure)
    W = tower.total_width
    n_pts = 1 << W
    cap = max_measure * n_pts
    arr = np.zeros(n_pts, dtype=bool)
    pts = np.arange(n_pts, dtype=np.int64)
    target = int(rng.integers(1, int(cap) + 1))
    misses = 0
    while np.count_nonzero(arr) < target and misses < 32:
        if rng.integers(0, 2):
            piece = _fiber_cylinder(tower, rng, pts)
        else:
            d = int(rng.integers(1, tower.depth + 1))
            pref = int(rng.integers(0, 1 << tower.offsets[d]))
            piece = (pts & ((1 << tower.offsets[d]) - 1)) == pref
        cand = arr | piece
        if np.count_nonzero(cand) > cap:
            misses += 1
            continue
        arr = cand
    return CylinderUnion(tower, DenseSubset(IndexSet(W), arr))


def threshold(n: int) -> Fraction:
    """Conditional-measure threshold for U_n^t: 3/4 at n = 0, then 1 − 2^-(n+2)."""
    return 1 - Fraction(1, 2 ** (n + 2))


@dataclass
class CoveringWitness:
    tower: BlockTower
    U_sets: dict[tuple[int, int], DenseSubset]
    good: list[np.ndarray]
    Z_t: dict[tuple[int, int], DenseSubset]
    Z_sets: list[DenseSubset]
    z_bound: list[dict] = field(default_factory=list)
    u_measure: list[dict] = field(default_factory=list)

    def good_prefixes(self, n: int) -> list[int]:
        return [int(v) for v in np.flatnonzero(self.good[n])]

    def W_mask(self) -> np.ndarray:
        t = self.tower
        pts = np.arange(1 << t.total_width, dtype=np.int64)
        out = np.zeros(pts.size, dtype=bool)
        for n in range(t.depth):
            lo, hi = t.block_interval(n)
            out |= self.Z_sets[n].members[(pts >> lo) & ((1 << (hi - lo)) - 1)]
        return out

    def in_W(self, z: int) -> bool:
        return any(self.tower.restrict(z, n) in self.Z_sets[n] for n in range(self.tower.depth))

    def to_json(self) -> dict:
        t = self.tower
        return {
            "Z_sets": [sorted(point_to_string(int(v), t.widths[n]) for v in Z) for n, Z in enumerate(self.Z_sets)],
            "good_counts": [int(g.sum()) for g in self.good],
            "z_bound": self.z_bound,
            "u_measure": self.u_measure,
        }


def conditional_inU(t: BlockTower, U: CylinderUnion, n: int) -> np.ndarray:
    """Boolean [s, t] table: s ∈ U_n^t, for all prefixes t of the first n blocks."""
    W = t.total_width
    P = t.offsets[n + 1]
    counts = U.members.members.reshape(-1, 1 << P).sum(axis=0, dtype=np.int64)
    th = threshold(n)
    # counts / 2^(W-P) >= th
    ok = counts * th.denominator >= th.numerator << (W - P)
    return ok.reshape(1 << t.widths[n], 1 << t.offsets[n])


def covering_data(t: BlockTower, U: CylinderUnion) -> CoveringWitness:
    if U.depth != t.depth or U.members.width != t.total_width:
        raise UsageError("U must live on this tower's full-depth cube")
    good = [np.ones(1, dtype=bool)]
    U_sets, Z_t, Z_sets, zb, um = {}, {}, [], [], []
    for n in range(t.depth):
        w = t.widths[n]
        inU = conditional_inU(t, U, n)
        blk = IndexSet(w)
        Zn = np.zeros(1 << w, dtype=bool)
        a = [t.side(n, 0).members, t.side(n, 1).members]
        sizes = [int(a[0].sum()), int(a[1].sum())]
        q = 2 ** (n + 2)
        mu_cap = Fraction(q - 2, q - 1)
        for tp in np.flatnonzero(good[n]):
            tp = int(tp)
            col = inU[:, tp].copy()
            U_sets[(n, tp)] = DenseSubset(blk, col)
            z = np.zeros(1 << w, dtype=bool)
            for i in (0, 1):
                if sizes[i] == 0:
                    z[:] = True
                elif col.any():
                    z |= subset_correlation(col, a[i]) == sizes[i]
            Z_t[(n, tp)] = DenseSubset(blk, z)
            Zn |= z
            size = int(z.sum())
            zb.append({"block": n, "prefix": tp, "size": size, "within": size <= n + 10})
            mu = Fraction(int(col.sum()), 1 << w)
            um.append({"block": n, "prefix": tp, "measure": fraction_json(mu), "within": mu < mu_cap})
        Z_sets.append(DenseSubset(blk, Zn))
        nxt = good[n][None, :] & ~inU
        good.append(nxt.reshape(-1))
    return CoveringWitness(t, U_sets, good, Z_t, Z_sets, zb, um)


def translate_union_exists(b: np.ndarray, size: int, need: int, node_budget: int = 2_000_000):
    """Is there Y with |Y| = size and |⋂_{y∈Y} (b + y)| >= need?

    Returns True, False, or None when the search exceeded ``node_budget``.
    Translation invariance lets Y contain 0.
    """
    n = b.size
    if need <= 0:
        return True
    if size > n:
        return False
    if size == 0:
        return n >= need
    idx = np.arange(n, dtype=np.int64)
    shifted = [int.from_bytes(np.packbits(b[idx ^ y], bitorder="little").tobytes(), "little") for y in range(n)]
    nodes = 0

    def dfs(cur: int, last: int, depth: int):
        nonlocal nodes
        if depth == size:
            return True
        for y in range(last + 1, n - (size - depth) + 1):
            nodes += 1
            if nodes > node_budget:
                return None
            nxt = cur & shifted[y]
            if nxt.bit_count() < need:
                continue
            r = dfs(nxt, y, depth + 1)
            if r is not False:
                return r
        return False

    if shifted[0].bit_count() < need:
        return False
    return dfs(shifted[0], 0, 1)


def chain_attribution(t: BlockTower, node_budget: int = 2_000_000) -> list[dict]:
    """Per block: does |X + a^i_n| / 2^|I_n| >= (2^(n+2)-2)/(2^(n+2)-1) hold for all |X| = n+10?

    |X + a^i| = 2^w − |⋂_{x∈X}(a^(1-i) + x)|, so the inequality fails iff
    some X of size n+10 has that intersection of size >= c, with
    c = ⌊2^w/(2^(n+2)-1)⌋ + 1. The condition is symmetric in (X, shifts),
    so the smaller of the two sizes is searched.
    """
    out = []
    for n in range(t.depth):
        w = t.widths[n]
        N = 1 << w
        m = n + 10
        q = 2 ** (n + 2)
        c = N // (q - 1) + 1
        held = []
        for i in (0, 1):
            b = t.side(n, 1 - i).members
            if m > N:
                held.append(True)
                continue
            if m <= c:
                ex = translate_union_exists(b, m, c, node_budget)
            else:
                ex = translate_union_exists(b, c, m, node_budget)
            held.append(None if ex is None else not ex)
        status = None if None in held else all(held)
        out.append({"block": n, "set_size": m, "max_intersection": c - 1, "per_side": held, "held": status})
    return out


@dataclass
class CoveringReport:
    counterexamples: list[tuple[int, int]]
    inclusions: int
    pairs: int
    W_measure: DyadicRational
    Z_sizes: list[int]
    chain: list[dict]
    z_bound_ok: bool
    u_measure_ok: bool

    def to_json(self) -> dict:
        return {
            "counterexamples": [list(c) for c in self.counterexamples],
            "inclusions": self.inclusions,
            "pairs": self.pairs,
            "W_measure": fraction_json(self.W_measure),
            "Z_sizes": self.Z_sizes,
            "chain": self.chain,
            "z_bound_ok": self.z_bound_ok,
            "u_measure_ok": self.u_measure_ok,
            "pass": not self.counterexamples,
        }


def covering_work(t: BlockTower) -> int:
    W = t.total_width
    return (1 << t.depth) * (1 << W) * (3 * W + 4)


def covering_check(
    t: BlockTower,
    U: CylinderUnion,
    budget: int = DEFAULT_BUDGET,
    witness: CoveringWitness | None = None,
) -> CoveringReport:
    """Every (z, y) with F^-1(y) ⊆ U + z must have z ∈ W_U; return the violators."""
    est = covering_work(t)
    if est > budget:
        raise BudgetExceeded("covering check", est, budget)
    cw = witness or covering_data(t, U)
    Wm = cw.W_mask()
    bad = []
    inclusions = 0
    for yv in range(1 << t.depth):
        y = tuple((yv >> n) & 1 for n in range(t.depth))
        fm = product_mask(fiber(t, y).sides)
        size = int(fm.sum())
        incl = subset_correlation(U.members.members, fm) == size
        inclusions += int(incl.sum())
        for z in np.flatnonzero(incl & ~Wm):
            bad.append((int(z), yv))
    bad.sort()
    return CoveringReport(
        counterexamples=bad,
        inclusions=inclusions,
        pairs=(1 << t.depth) * (1 << t.total_width),
        W_measure=DyadicRational(int(Wm.sum()), t.total_width),
        Z_sizes=[Z.cardinality for Z in cw.Z_sets],
        chain=chain_attribution(t),
        z_bound_ok=all(e["within"] for e in cw.z_bound),
        u_measure_ok=all(e["within"] for e in cw.u_measure),
    )
