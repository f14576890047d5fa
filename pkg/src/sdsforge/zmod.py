"""Arithmetic in Z_v: unit subgroups, their orbits, and the +/- difference classes.

Orbits are labelled by their smallest member, which is also how published
index sets name them.  The difference-class partition (orbits of the group
generated by H and -1 on the nonzero residues) indexes every multiplicity
vector used downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import gcd
from typing import Iterable, Sequence

MAX_MODULUS = 1 << 20


class NonUnitGenerator(ValueError):
    pass


class UnknownLabel(KeyError):
    pass


def check_modulus(v: int) -> int:
    v = int(v)
    if not 1 <= v <= MAX_MODULUS:
        raise ValueError(f"modulus must lie in [1, {MAX_MODULUS}], got {v}")
    return v


def euler_phi(v: int) -> int:
    result, n, p = v, v, 2
    while p * p <= n:
        if n % p == 0:
            while n % p == 0:
                n //= p
            result -= result // p
        p += 1
    if n > 1:
        result -= result // n
    return result


def is_prime(v: int) -> bool:
    if v < 2:
        return False
    p = 2
    while p * p <= v:
        if v % p == 0:
            return False
        p += 1
    return True


@dataclass(frozen=True)
class UnitSubgroup:
    v: int
    elements: tuple[int, ...]
    generators: tuple[int, ...] = ()

    @property
    def order(self) -> int:
        return len(self.elements)

    def __contains__(self, x: int) -> bool:
        return x % self.v in self.elements


def subgroup_closure(v: int, generators: Iterable[int]) -> UnitSubgroup:
    """Smallest multiplicatively closed subset of Z_v* containing 1 and ``generators``."""
    v = check_modulus(v)
    gens = tuple(int(g) % v for g in generators)
    for g in gens:
        if gcd(g, v) != 1:
            raise NonUnitGenerator(f"generator {g} is not a unit mod {v}")
    one = 1 % v
    members = {one}
    frontier = [one]
    while frontier:
        x = frontier.pop()
        for g in gens:
            y = x * g % v
            if y not in members:
                members.add(y)
                frontier.append(y)
    return UnitSubgroup(v, tuple(sorted(members)), gens)


@dataclass(frozen=True)
class Orbit:
    label: int
    members: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.members)


def _partition(v: int, multipliers: Sequence[int], start: int) -> list[Orbit]:
    seen = [False] * v
    out = []
    for x in range(start, v):
        if seen[x]:
            continue
        members = sorted({x * g % v for g in multipliers})
        for y in members:
            seen[y] = True
        out.append(Orbit(members[0], tuple(members)))
    return out


@dataclass(frozen=True)
class OrbitTable:
    """Partition of Z_v into orbits of a unit subgroup ``H``."""

    subgroup: UnitSubgroup
    orbits: tuple[Orbit, ...]
    _index: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def v(self) -> int:
        return self.subgroup.v

    @property
    def nontrivial_count(self) -> int:
        return len(self.orbits) - 1

    @property
    def labels(self) -> list[int]:
        return [o.label for o in self.orbits]

    @property
    def nontrivial(self) -> tuple[Orbit, ...]:
        return self.orbits[1:]

    def orbit(self, label: int) -> Orbit:
        try:
            return self.orbits[self._index[label]]
        except KeyError:
            raise UnknownLabel(label) from None

    def label_of(self, x: int) -> int:
        return self._owner[x % self.v]

    @cached_property
    def _owner(self) -> list[int]:
        owner = [0] * self.v
        for o in self.orbits:
            for x in o.members:
                owner[x] = o.label
        return owner

    def union(self, labels: Iterable[int]) -> list[int]:
        """Residues covered by the orbits named in ``labels`` (each label used once)."""
        labels = list(labels)
        if len(set(labels)) != len(labels):
            raise ValueError("repeated orbit label in index set")
        out: list[int] = []
        for lab in labels:
            out.extend(self.orbit(lab).members)
        return sorted(out)

    def format(self) -> str:
        return "".join(
            f"{o.label}: {' '.join(map(str, o.members))}\n" for o in self.orbits
        )


def orbit_table(subgroup: UnitSubgroup) -> OrbitTable:
    v = subgroup.v
    orbits = tuple(_partition(v, subgroup.elements, 0))
    return OrbitTable(subgroup, orbits, {o.label: i for i, o in enumerate(orbits)})


def negate_orbit(table: OrbitTable, label: int) -> int:
    """Label of the orbit ``{v - x : x in H.label}``."""
    orbit = table.orbit(label)
    return table.label_of(-orbit.members[0])


@dataclass(frozen=True)
class SymClassTable:
    """Orbits of <H, -1> on the nonzero residues of Z_v."""

    subgroup: UnitSubgroup
    classes: tuple[Orbit, ...]

    @property
    def v(self) -> int:
        return self.subgroup.v

    @property
    def class_count(self) -> int:
        return len(self.classes)

    @property
    def labels(self) -> list[int]:
        return [c.label for c in self.classes]

    @property
    def sizes(self) -> list[int]:
        return [c.size for c in self.classes]

    def class_index(self) -> list[int]:
        """Map residue -> class position; residue 0 maps to -1."""
        idx = [-1] * self.v
        for i, c in enumerate(self.classes):
            for x in c.members:
                idx[x] = i
        return idx


def sym_class_table(subgroup: UnitSubgroup) -> SymClassTable:
    v = subgroup.v
    multipliers = sorted({g % v for g in subgroup.elements} | {(-g) % v for g in subgroup.elements})
    return SymClassTable(subgroup, tuple(_partition(v, multipliers, 1)))
