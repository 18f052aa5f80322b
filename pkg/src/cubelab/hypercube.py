"""Set algebra on finite Boolean hypercubes (Z/2)^I.

Points are integers: coordinate ``i`` of a point is bit ``i``. When a point
is written as a bit string, character ``i`` is coordinate ``i``, so
``"0110"`` is the integer 6. Subsets are dense boolean membership vectors
indexed by point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dyadic import DyadicRational
from .errors import UsageError
from .walsh import subset_correlation

DEFAULT_WIDTH_CAP = 24


@dataclass(frozen=True)
class IndexSet:
    width: int
    label: str | None = None
    cap: int = DEFAULT_WIDTH_CAP

    def __post_init__(self):
        if not isinstance(self.width, (int, np.integer)) or isinstance(self.width, bool):
            raise UsageError(f"width must be an integer, got {self.width!r}")
        if self.width < 1 or self.width > self.cap:
            raise UsageError(f"width {self.width} outside [1, {self.cap}]")

    @property
    def size(self) -> int:
        return 1 << self.width

    def __eq__(self, other):
        return isinstance(other, IndexSet) and self.width == other.width

    def __hash__(self):
        return hash(self.width)


@dataclass(frozen=True)
class PointMask:
    bits: int
    universe: IndexSet

    def __post_init__(self):
        if not 0 <= self.bits < self.universe.size:
            raise UsageError(f"point {self.bits} outside 2^{self.universe.width}")

    @classmethod
    def from_string(cls, s: str, universe: IndexSet | None = None) -> "PointMask":
        s = s.replace("·", "").replace(" ", "")
        if universe is None:
            universe = IndexSet(len(s))
        elif len(s) != universe.width:
            raise UsageError(f"bit string {s!r} has wrong length for width {universe.width}")
        return cls(point_from_string(s), universe)

    def to_string(self) -> str:
        return point_to_string(self.bits, self.universe.width)

    def __xor__(self, other: "PointMask") -> "PointMask":
        _same_universe(self.universe, other.universe)
        return PointMask(self.bits ^ other.bits, self.universe)

    def __int__(self):
        return self.bits

    def __index__(self):
        return self.bits


def point_from_string(s: str) -> int:
    if any(c not in "01" for c in s):
        raise UsageError(f"not a bit string: {s!r}")
    return sum(1 << i for i, c in enumerate(s) if c == "1")


def point_to_string(bits: int, width: int) -> str:
    return "".join("1" if (bits >> i) & 1 else "0" for i in range(width))


def _same_universe(u: IndexSet, v: IndexSet) -> None:
    if u.width != v.width:
        raise UsageError(f"universe mismatch: width {u.width} vs {v.width}")


def _as_bits(x, universe: IndexSet) -> int:
    if isinstance(x, PointMask):
        _same_universe(x.universe, universe)
        return x.bits
    x = int(x)
    if not 0 <= x < universe.size:
        raise UsageError(f"point {x} outside 2^{universe.width}")
    return x


class DenseSubset:
    """Immutable subset of 2^I stored as a boolean vector of length 2^|I|."""

    __slots__ = ("universe", "_members", "cardinality")

    def __init__(self, universe: IndexSet, membership):
        arr = np.asarray(membership, dtype=bool)
        if arr.shape != (universe.size,):
            raise UsageError(f"membership must have length {universe.size}, got {arr.shape}")
        arr = arr.copy()
        arr.flags.writeable = False
        self.universe = universe
        self._members = arr
        self.cardinality = int(np.count_nonzero(arr))

    @classmethod
    def _wrap(cls, universe: IndexSet, arr: np.ndarray) -> "DenseSubset":
        # arr must be a fresh bool vector no one else holds
        obj = cls.__new__(cls)
        arr.flags.writeable = False
        obj.universe = universe
        obj._members = arr
        obj.cardinality = int(np.count_nonzero(arr))
        return obj

    # construction helpers

    @classmethod
    def random(cls, universe: IndexSet, cardinality: int, rng: np.random.Generator) -> "DenseSubset":
        """Uniform subset of exactly ``cardinality`` points."""
        if not 0 <= cardinality <= universe.size:
            raise UsageError(f"cardinality {cardinality} outside 0..{universe.size}")
        arr = np.zeros(universe.size, dtype=bool)
        arr[rng.choice(universe.size, size=cardinality, replace=False)] = True
        return cls._wrap(universe, arr)

    @classmethod
    def empty(cls, universe: IndexSet) -> "DenseSubset":
        return cls(universe, np.zeros(universe.size, dtype=bool))

    @classmethod
    def full(cls, universe: IndexSet) -> "DenseSubset":
        return cls(universe, np.ones(universe.size, dtype=bool))

    @classmethod
    def from_points(cls, universe: IndexSet, points: Iterable) -> "DenseSubset":
        arr = np.zeros(universe.size, dtype=bool)
        idx = [_as_bits(p, universe) for p in points]
        arr[idx] = True
        return cls(universe, arr)

    @classmethod
    def from_strings(cls, strings: Sequence[str]) -> "DenseSubset":
        strings = list(strings)
        if not strings:
            raise UsageError("cannot infer width from an empty list of strings")
        universe = IndexSet(len(strings[0]))
        return cls.from_points(universe, (point_from_string(s) for s in strings))

    # views

    @property
    def members(self) -> np.ndarray:
        """Read-only boolean membership vector."""
        return self._members

    @property
    def width(self) -> int:
        return self.universe.width

    def points(self) -> np.ndarray:
        return np.flatnonzero(self._members)

    def to_strings(self) -> list[str]:
        return [point_to_string(int(p), self.width) for p in self.points()]

    def density(self) -> DyadicRational:
        return DyadicRational(self.cardinality, self.width)

    def check_cardinality(self) -> bool:
        return self.cardinality == int(np.count_nonzero(self._members))

    def __contains__(self, x) -> bool:
        return bool(self._members[_as_bits(x, self.universe)])

    def __len__(self) -> int:
        return self.cardinality

    def __iter__(self):
        return (int(p) for p in self.points())

    def __eq__(self, other):
        if not isinstance(other, DenseSubset):
            return NotImplemented
        return self.width == other.width and np.array_equal(self._members, other._members)

    def __hash__(self):
        return hash((self.width, self._members.tobytes()))

    def __repr__(self):
        return f"DenseSubset(width={self.width}, cardinality={self.cardinality})"

    # set algebra

    def _check(self, other: "DenseSubset") -> None:
        _same_universe(self.universe, other.universe)

    def __and__(self, other: "DenseSubset") -> "DenseSubset":
        self._check(other)
        return DenseSubset._wrap(self.universe, self._members & other._members)

    def __or__(self, other: "DenseSubset") -> "DenseSubset":
        self._check(other)
        return DenseSubset._wrap(self.universe, self._members | other._members)

    def __sub__(self, other: "DenseSubset") -> "DenseSubset":
        self._check(other)
        return DenseSubset._wrap(self.universe, self._members & ~other._members)

    def complement(self) -> "DenseSubset":
        return DenseSubset._wrap(self.universe, ~self._members)

    def issubset(self, other: "DenseSubset") -> bool:
        self._check(other)
        return not np.any(self._members & ~other._members)

    def isdisjoint(self, other: "DenseSubset") -> bool:
        self._check(other)
        return not np.any(self._members & other._members)

    # serialization

    def to_hex(self) -> str:
        packed = np.packbits(self._members, bitorder="little")
        return packed.tobytes().hex()

    @classmethod
    def from_hex(cls, universe: IndexSet, text: str) -> "DenseSubset":
        raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
        bits = np.unpackbits(raw, bitorder="little").astype(bool)
        if bits.size < universe.size or np.any(bits[universe.size:]):
            raise UsageError("hex bit-vector does not match the universe width")
        return cls(universe, bits[: universe.size])

    def to_json(self) -> dict:
        return {"width": self.width, "cardinality": self.cardinality, "bits": self.to_hex()}

    @classmethod
    def from_json(cls, obj: dict) -> "DenseSubset":
        s = cls.from_hex(IndexSet(int(obj["width"])), obj["bits"])
        if "cardinality" in obj and int(obj["cardinality"]) != s.cardinality:
            raise UsageError("cardinality field disagrees with the bit-vector")
        return s


def xor_index(width: int, x: int) -> np.ndarray:
    return np.arange(1 << width, dtype=np.int64) ^ x


def translate(S: DenseSubset, x) -> DenseSubset:
    """``S + x = {s ^ x : s in S}``."""
    xb = _as_bits(x, S.universe)
    if xb == 0:
        return S
    return DenseSubset._wrap(S.universe, S.members[xor_index(S.width, xb)])


def intersect_translates(a0: DenseSubset, X: Sequence) -> DenseSubset:
    """``⋂_{x in X} (a0 + x)``; X must be non-empty."""
    X = list(X)
    if not X:
        raise UsageError("intersect_translates needs a non-empty X")
    out = np.ones(a0.universe.size, dtype=bool)
    idx = np.arange(a0.universe.size, dtype=np.int64)
    for x in X:
        xb = _as_bits(x, a0.universe)
        out &= a0.members[idx ^ xb]
    return DenseSubset._wrap(a0.universe, out)


def subgroup_closure(X: Sequence, universe: IndexSet | None = None) -> DenseSubset:
    """XOR span of X, including 0."""
    X = list(X)
    if universe is None:
        universe = next((x.universe for x in X if isinstance(x, PointMask)), None)
        if universe is None:
            raise UsageError("universe required when X has no PointMask")
    span = np.zeros(universe.size, dtype=bool)
    span[0] = True
    idx = np.arange(universe.size, dtype=np.int64)
    for x in X:
        xb = _as_bits(x, universe)
        if not span[xb]:
            span |= span[idx ^ xb]
    return DenseSubset._wrap(universe, span)


def is_subgroup(G: DenseSubset) -> bool:
    m = G.members
    if not m[0]:
        return False
    c = G.cardinality
    if c & (c - 1):
        return False
    idx = np.arange(G.universe.size, dtype=np.int64)
    return all(np.array_equal(m[idx ^ g], m) for g in G.points())


def coset_selectors(G: DenseSubset) -> list[DenseSubset]:
    """|G| disjoint selectors, one element from every coset of G each.

    Cosets are taken in increasing order of their least element; selector j
    collects the j-th smallest element of each coset.
    """
    if not is_subgroup(G):
        raise UsageError("coset_selectors needs a subgroup of 2^I")
    u = G.universe
    elems = G.points().astype(np.int64)
    seen = np.zeros(u.size, dtype=bool)
    reps = []
    for p in range(u.size):
        if not seen[p]:
            reps.append(p)
            seen[elems ^ p] = True
    cosets = np.sort(np.asarray(reps, dtype=np.int64)[:, None] ^ elems[None, :], axis=1)
    out = []
    for j in range(elems.size):
        arr = np.zeros(u.size, dtype=bool)
        arr[cosets[:, j]] = True
        out.append(DenseSubset(u, arr))
    return out


def check_selectors(selectors: Sequence[DenseSubset], G: DenseSubset) -> dict[str, bool]:
    """The four selector conditions, checked literally by pairwise comparison."""
    u = G.universe
    n = u.size
    g_size = G.cardinality
    distinct_sums_avoid_g = True
    for U in selectors:
        pts = list(U)
        for a in range(len(pts)):
            for b in range(a + 1, len(pts)):
                if (pts[a] ^ pts[b]) in G:
                    distinct_sums_avoid_g = False
    sizes_ok = len(selectors) == g_size and all(U.cardinality * g_size == n for U in selectors)
    disjoint = all(
        selectors[i].isdisjoint(selectors[j])
        for i in range(len(selectors))
        for j in range(i + 1, len(selectors))
    )
    union = np.zeros(n, dtype=bool)
    for U in selectors:
        union |= U.members
    return {
        "sums_outside_subgroup": distinct_sums_avoid_g,
        "equal_sizes": sizes_ok,
        "pairwise_disjoint": disjoint,
        "cover": bool(union.all()),
    }


def intersection_counts_with_translates(A: DenseSubset, B: DenseSubset) -> np.ndarray:
    """``c[s] = |A ∩ (B + s)|`` for every s, exactly."""
    _same_universe(A.universe, B.universe)
    return subset_correlation(A.members, B.members)


class Partition:
    """``2^I = a0 ⊔ a1``."""

    __slots__ = ("universe", "a0", "a1")

    def __init__(self, a0: DenseSubset, a1: DenseSubset | None = None):
        if a1 is None:
            a1 = a0.complement()
        _same_universe(a0.universe, a1.universe)
        if not np.array_equal(a1.members, ~a0.members):
            raise UsageError("a0 and a1 do not partition 2^I")
        self.universe = a0.universe
        self.a0 = a0
        self.a1 = a1

    @property
    def width(self) -> int:
        return self.universe.width

    @property
    def balanced(self) -> bool:
        return self.a0.cardinality == self.universe.size // 2

    @property
    def nondegenerate(self) -> bool:
        return 0 < self.a0.cardinality < self.universe.size

    def side(self, i: int) -> DenseSubset:
        if i not in (0, 1):
            raise UsageError("partition side must be 0 or 1")
        return self.a1 if i else self.a0

    def __eq__(self, other):
        return isinstance(other, Partition) and self.a0 == other.a0

    def __hash__(self):
        return hash(self.a0)

    def __repr__(self):
        return f"Partition(width={self.width}, |a0|={self.a0.cardinality})"

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "a0": self.a0.to_hex(),
            "a0_cardinality": self.a0.cardinality,
            "balanced": self.balanced,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Partition":
        u = IndexSet(int(obj["width"]))
        a0 = DenseSubset.from_hex(u, obj["a0"])
        if "a0_cardinality" in obj and int(obj["a0_cardinality"]) != a0.cardinality:
            raise UsageError("a0_cardinality disagrees with the bit-vector")
        return cls(a0)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)
