"""SDS parameter sets from decompositions of 4v into four odd squares."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from math import isqrt
from typing import Iterable, Sequence

from .zmod import OrbitTable


class EvenModulus(ValueError):
    pass


class NonPositiveLambda(ValueError):
    pass


@dataclass(frozen=True)
class FourSquares:
    v: int
    n: tuple[int, int, int, int]

    def __post_init__(self):
        n1, n2, n3, n4 = self.n
        if sum(x * x for x in self.n) != 4 * self.v:
            raise ValueError(f"{self.n} is not a decomposition of 4*{self.v}")
        if not n1 >= n2 >= n3 >= n4 > 0:
            raise ValueError(f"{self.n} is not sorted descending")
        if any(x % 2 == 0 for x in self.n):
            raise ValueError(f"{self.n} has an even entry")

    @property
    def bounded(self) -> bool:
        return 2 * self.n[0] < self.v


def four_squares_decompositions(v: int, bounded: bool = True) -> list[FourSquares]:
    """All 4v = n1^2+n2^2+n3^2+n4^2 with odd n1 >= n2 >= n3 >= n4 > 0.

    With ``bounded`` (the default) only decompositions with n1 < v/2 are kept,
    so that every k_i = (v - n_i)/2 is positive.  Sorted in descending
    lexicographic order.
    """
    if v % 2 == 0:
        raise EvenModulus(f"v must be odd, got {v}")
    if v < 3:
        raise ValueError("v must be at least 3")
    target = 4 * v
    out = []
    top = min(isqrt(target), (v - 1) // 2) if bounded else isqrt(target)
    for n1 in range(top if top % 2 else top - 1, 0, -2):
        r1 = target - n1 * n1
        for n2 in range(min(n1, isqrt(r1)) | 1, 0, -2):
            if n2 > n1 or n2 * n2 > r1:
                continue
            r2 = r1 - n2 * n2
            for n3 in range(min(n2, isqrt(r2)) | 1, 0, -2):
                if n3 > n2 or n3 * n3 > r2:
                    continue
                r3 = r2 - n3 * n3
                n4 = isqrt(r3)
                if n4 * n4 == r3 and n4 % 2 == 1 and n4 <= n3:
                    out.append(FourSquares(v, (n1, n2, n3, n4)))
    return out


@dataclass(frozen=True)
class ParameterSet:
    v: int
    k: tuple[int, int, int, int]
    lam: int
    signs: str = ""
    source: FourSquares | None = None

    def __post_init__(self):
        if self.lam != sum(self.k) - self.v:
            raise ValueError("lambda != sum(k) - v")
        if sum(k * (k - 1) for k in self.k) != self.lam * (self.v - 1):
            raise ValueError("sum k(k-1) != lambda (v-1)")

    def format(self) -> str:
        ks = ",".join(map(str, self.k))
        ns = ",".join(map(str, self.source.n)) if self.source else ""
        return f"{self.v};{ks};{self.lam};{self.signs};{ns}"


def parameter_set(d: FourSquares, signs: Sequence[str] | str = "----") -> ParameterSet:
    """k_i = (v + n_i)/2 where the sign is '+', (v - n_i)/2 where it is '-'."""
    signs = "".join(signs)
    if len(signs) != 4 or set(signs) - {"+", "-"}:
        raise ValueError(f"bad sign choice {signs!r}")
    k = tuple((d.v + n) // 2 if s == "+" else (d.v - n) // 2 for s, n in zip(signs, d.n))
    if min(k) < 0:
        raise NonPositiveLambda(f"negative block size in {k}")
    lam = sum(k) - d.v
    if lam <= 0:
        raise NonPositiveLambda(f"sum(k) = {sum(k)} <= v = {d.v}")
    return ParameterSet(d.v, k, lam, signs, d)


def all_parameter_sets(v: int, bounded: bool = True) -> list[ParameterSet]:
    out = []
    for d in four_squares_decompositions(v, bounded):
        for signs in itertools.product("-+", repeat=4):
            try:
                out.append(parameter_set(d, signs))
            except NonPositiveLambda:
                pass
    return out


def reachable_sizes(sizes: Iterable[int], limit: int) -> list[bool]:
    """reach[k] is True iff some sub-multiset of ``sizes`` sums to k (k <= limit)."""
    reach = [False] * (limit + 1)
    reach[0] = True
    for size, count in Counter(sizes).items():
        # bounded knapsack, one pass per copy; counts are small
        for _ in range(count):
            for t in range(limit, size - 1, -1):
                if reach[t - size]:
                    reach[t] = True
    return reach


@dataclass(frozen=True)
class Feasibility:
    k: tuple[int, ...]
    per_block: tuple[bool, ...]

    @property
    def feasible(self) -> bool:
        return all(self.per_block)


def orbit_feasible(p: ParameterSet | Sequence[int], table: OrbitTable) -> Feasibility:
    """Check each k_i is a sum of distinct nontrivial orbit sizes."""
    ks = tuple(p.k if isinstance(p, ParameterSet) else p)
    if isinstance(p, ParameterSet) and p.v != table.v:
        raise ValueError("parameter set and orbit table disagree on v")
    sizes = [o.size for o in table.nontrivial]
    reach = reachable_sizes(sizes, max(ks, default=0))
    return Feasibility(ks, tuple(reach[k] if k >= 0 else False for k in ks))
