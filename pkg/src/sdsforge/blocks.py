"""Candidate base blocks built as unions of H-orbits.

A candidate is written twice: its orbit labels go to the ``F`` file and its
compressed difference multiplicities (one per +/- class) go to the aligned
``F'`` file.  Line numbers in files are 1-based.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass
from math import comb
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .zmod import OrbitTable, SymClassTable, UnitSubgroup, negate_orbit

FORMAT_VERSION = 1


class MismatchedGroup(ValueError):
    pass


class InfeasibleCardinality(ValueError):
    pass


class SkewImpossible(ValueError):
    pass


@dataclass(frozen=True)
class BlockCandidate:
    index_set: tuple[int, ...]
    union: tuple[int, ...]
    subgroup: UnitSubgroup

    @property
    def cardinality(self) -> int:
        return len(self.union)


def make_candidate(table: OrbitTable, labels: Iterable[int]) -> BlockCandidate:
    labels = tuple(sorted(labels))
    return BlockCandidate(labels, tuple(table.union(labels)), table.subgroup)


@dataclass(frozen=True)
class DiffVector:
    classes: SymClassTable
    counts: tuple[int, ...]

    def total(self) -> int:
        return sum(c * s for c, s in zip(self.counts, self.classes.sizes))


def _indicator(v: int, unions: Sequence[Sequence[int]]) -> np.ndarray:
    ind = np.zeros((len(unions), v), dtype=np.int32)
    for row, members in zip(ind, unions):
        row[list(members)] = 1
    return ind


def diff_counts(ind: np.ndarray, shifts: Sequence[int]) -> np.ndarray:
    """Ordered-pair difference counts of each indicator row at each shift.

    ``out[b, j]`` is the number of (a, a - shifts[j]) pairs inside block ``b``.
    """
    ind = np.atleast_2d(ind)
    out = np.empty((ind.shape[0], len(shifts)), dtype=np.int64)
    for j, c in enumerate(shifts):
        out[:, j] = np.einsum("bi,bi->b", ind, np.roll(ind, c, axis=1))
    return out


def diff_matrix(unions: Sequence[Sequence[int]], classes: SymClassTable, check: bool = False) -> np.ndarray:
    """Per-class multiplicity vectors, one row per block."""
    v = classes.v
    ind = _indicator(v, unions)
    counts = diff_counts(ind, classes.labels)
    if check and len(unions):
        full = diff_counts(ind, range(1, v))
        pos = classes.class_index()
        expected = counts[:, [pos[c] for c in range(1, v)]]
        if not np.array_equal(full, expected):
            raise AssertionError("difference multiplicity is not constant on a class")
    return counts


def diff_vector(x: BlockCandidate, classes: SymClassTable, check: bool = True) -> DiffVector:
    if x.subgroup != classes.subgroup:
        raise MismatchedGroup("candidate and class table were built from different (v, H)")
    counts = diff_matrix([x.union], classes, check=check)[0]
    return DiffVector(classes, tuple(int(c) for c in counts))


def _skew_pairs(table: OrbitTable) -> list[tuple[int, int]]:
    v = table.v
    if v % 2 == 0:
        raise SkewImpossible("skew blocks need odd v")
    if (v - 1) in table.subgroup:
        raise SkewImpossible("-1 lies in H, so every orbit is closed under negation")
    pairs = []
    for o in table.nontrivial:
        neg = negate_orbit(table, o.label)
        if neg == o.label:
            raise SkewImpossible(f"orbit {o.label} is closed under negation")
        if o.label < neg:
            pairs.append((o.label, neg))
    return pairs


def _compositions(groups: dict[int, list[int]], k: int) -> list[tuple[tuple[int, ...], int]]:
    """(counts per size group, number of label subsets) for every way to reach k."""
    sizes = sorted(groups)
    out = []

    def rec(i, remaining, acc):
        if i == len(sizes):
            if remaining == 0:
                weight = 1
                for s, c in zip(sizes, acc):
                    weight *= comb(len(groups[s]), c)
                out.append((tuple(acc), weight))
            return
        s = sizes[i]
        for c in range(min(len(groups[s]), remaining // s) + 1):
            rec(i + 1, remaining - c * s, acc + [c])

    rec(0, k, [])
    return out


def count_candidates(table: OrbitTable, k: int, skew: bool = False) -> int:
    if skew:
        pairs = _skew_pairs(table)
        return 2 ** len(pairs) if k == (table.v - 1) // 2 else 0
    groups = _size_groups(table)
    return sum(w for _, w in _compositions(groups, k))


def _size_groups(table: OrbitTable) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for o in table.nontrivial:
        groups.setdefault(o.size, []).append(o.label)
    return groups


def _all_plain(groups, comps) -> Iterator[tuple[int, ...]]:
    sizes = sorted(groups)
    for counts, _ in comps:
        parts = [itertools.combinations(groups[s], c) for s, c in zip(sizes, counts)]
        for choice in itertools.product(*parts):
            yield tuple(sorted(itertools.chain.from_iterable(choice)))


def _all_skew(pairs) -> Iterator[tuple[int, ...]]:
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        yield tuple(sorted(p[b] for p, b in zip(pairs, bits)))


def generate_candidates(
    table: OrbitTable,
    k: int,
    skew: bool = False,
    budget: int = 1000,
    seed: int = 0,
    mode: str = "sample",
) -> Iterator[BlockCandidate]:
    """Yield up to ``budget`` distinct orbit unions of cardinality ``k``.

    ``mode="sample"`` is uniform over all qualifying label sets: a size
    composition is drawn with probability proportional to its number of label
    subsets, then labels are drawn without replacement inside each size group.
    When the whole space is not much larger than the budget it is enumerated
    and shuffled instead.

    ``mode="walk"`` starts at a seed-derived rank of the enumeration order
    (see :class:`CandidateSpace`) and emits consecutive candidates, wrapping
    around.  Output depends only on the arguments in both modes.
    """
    if mode == "walk":
        space = CandidateSpace(table, k, skew)
        return _walk(space, budget, seed)
    if mode != "sample":
        raise ValueError(f"unknown generation mode {mode!r}")
    if skew:
        pairs = _skew_pairs(table)
        if k != (table.v - 1) // 2:
            raise InfeasibleCardinality(f"a skew block has cardinality {(table.v - 1) // 2}, not {k}")
        total = 2 ** len(pairs)
        groups = comps = None
    else:
        pairs = None
        groups = _size_groups(table)
        comps = _compositions(groups, k)
        total = sum(w for _, w in comps)
        if total == 0:
            raise InfeasibleCardinality(f"no union of nontrivial orbits has cardinality {k}")
    return _stream(table, skew, pairs, groups, comps, total, budget, seed)


def _stream(table, skew, pairs, groups, comps, total, budget, seed) -> Iterator[BlockCandidate]:
    rng = np.random.default_rng(seed)
    if budget <= 0:
        return

    if total <= 2 * budget:
        every = list(_all_skew(pairs) if skew else _all_plain(groups, comps))
        for i in rng.permutation(len(every))[:budget]:
            yield make_candidate(table, every[i])
        return

    if not skew:
        sizes = sorted(groups)
        probs = np.array([w / total for _, w in comps], dtype=float)
        probs /= probs.sum()
    seen: set[tuple[int, ...]] = set()
    while len(seen) < budget:
        if skew:
            bits = rng.integers(0, 2, len(pairs))
            labels = tuple(sorted(p[b] for p, b in zip(pairs, bits)))
        else:
            counts, _ = comps[rng.choice(len(comps), p=probs)]
            chosen = []
            for s, c in zip(sizes, counts):
                if c:
                    pick = rng.choice(len(groups[s]), size=c, replace=False)
                    chosen.extend(groups[s][i] for i in pick)
            labels = tuple(sorted(chosen))
        if labels in seen:
            continue
        seen.add(labels)
        yield make_candidate(table, labels)


def _lex_unrank(n: int, c: int, r: int) -> list[int]:
    out, x = [], 0
    for i in range(c):
        while comb(n - x - 1, c - i - 1) <= r:
            r -= comb(n - x - 1, c - i - 1)
            x += 1
        out.append(x)
        x += 1
    return out


def _lex_rank(n: int, sub: Sequence[int]) -> int:
    c, r, prev = len(sub), 0, -1
    for i, x in enumerate(sub):
        for y in range(prev + 1, x):
            r += comb(n - y - 1, c - i - 1)
        prev = x
    return r


class CandidateSpace:
    """Bijection between ranks 0..total-1 and the label sets of cardinality k.

    Plain blocks are ordered by size composition, then by the lexicographic
    ranks of the per-size-group label choices (mixed radix, first group most
    significant).  Skew blocks are ordered by the bit pattern that picks one
    orbit from each {O, -O} pair, pair 0 being the least significant bit.
    """

    def __init__(self, table: OrbitTable, k: int, skew: bool = False):
        self.table, self.k, self.skew = table, k, skew
        if skew:
            self.pairs = _skew_pairs(table)
            if k != (table.v - 1) // 2:
                raise InfeasibleCardinality(f"a skew block has cardinality {(table.v - 1) // 2}, not {k}")
            self.total = 2 ** len(self.pairs)
        else:
            self.groups = _size_groups(table)
            self.sizes = sorted(self.groups)
            self.comps = _compositions(self.groups, k)
            self.total = sum(w for _, w in self.comps)
            if self.total == 0:
                raise InfeasibleCardinality(f"no union of nontrivial orbits has cardinality {k}")

    def labels(self, rank: int) -> tuple[int, ...]:
        if not 0 <= rank < self.total:
            raise IndexError(rank)
        if self.skew:
            return tuple(sorted(p[(rank >> j) & 1] for j, p in enumerate(self.pairs)))
        for counts, weight in self.comps:
            if rank < weight:
                break
            rank -= weight
        chosen = []
        for s, c in reversed(list(zip(self.sizes, counts))):
            n = len(self.groups[s])
            rank, r = divmod(rank, comb(n, c))
            chosen.extend(self.groups[s][i] for i in _lex_unrank(n, c, r))
        return tuple(sorted(chosen))

    def rank(self, labels: Iterable[int]) -> int:
        labels = set(labels)
        if self.skew:
            r = 0
            for j, (a, b) in enumerate(self.pairs):
                if (a in labels) == (b in labels):
                    raise ValueError("label set is not a skew choice")
                r |= int(b in labels) << j
            return r
        counts = tuple(sum(1 for lab in self.groups[s] if lab in labels) for s in self.sizes)
        base = 0
        for comp, weight in self.comps:
            if comp == counts:
                break
            base += weight
        else:
            raise ValueError("label set has the wrong cardinality")
        r = 0
        for s, c in zip(self.sizes, counts):
            n = len(self.groups[s])
            idx = [i for i, lab in enumerate(self.groups[s]) if lab in labels]
            r = r * comb(n, c) + _lex_rank(n, idx)
        return base + r

    def start(self, seed: int) -> int:
        rng = np.random.default_rng(seed)
        return int.from_bytes(rng.bytes(16 + self.total.bit_length() // 8), "little") % self.total


def _walk(space: CandidateSpace, budget: int, seed: int) -> Iterator[BlockCandidate]:
    start = space.start(seed)
    for step in range(min(budget, space.total)):
        yield make_candidate(space.table, space.labels((start + step) % space.total))


def find_walk_seed(
    table: OrbitTable, k: int, skew: bool, labels: Iterable[int], budget: int, first: int = 0, tries: int = 10**7
) -> int:
    """Smallest seed >= ``first`` whose walk of length ``budget`` visits ``labels``."""
    space = CandidateSpace(table, k, skew)
    target = space.rank(labels)
    for seed in range(first, first + tries):
        if (target - space.start(seed)) % space.total < budget:
            return seed
    raise LookupError("no seed found in the allowed range")


# --- file pairs ---------------------------------------------------------------


def format_lines(rows: Iterable[Sequence[int]]) -> str:
    return "".join(" ".join(map(str, r)) + "\n" for r in rows)


def emit_files(candidates: Sequence[BlockCandidate], classes: SymClassTable) -> tuple[str, str]:
    """Return the aligned (F, F') texts for ``candidates``."""
    for c in candidates:
        if c.subgroup != classes.subgroup:
            raise MismatchedGroup("candidates must share the class table's (v, H)")
    counts = diff_matrix([c.union for c in candidates], classes)
    return format_lines(c.index_set for c in candidates), format_lines(counts.tolist())


def write_block_files(
    prefix: str | os.PathLike,
    candidates: Iterable[BlockCandidate],
    classes: SymClassTable,
    header: dict,
    batch: int = 4096,
) -> dict:
    """Stream candidates to ``prefix.F``, ``prefix.Fp`` and the ``prefix.meta`` sidecar."""
    prefix = Path(prefix)
    count = 0
    with open(f"{prefix}.F", "w") as f, open(f"{prefix}.Fp", "w") as fp:
        for chunk in _batched(candidates, batch):
            f_text, fp_text = emit_files(chunk, classes)
            f.write(f_text)
            fp.write(fp_text)
            count += len(chunk)
    meta = {
        "format": FORMAT_VERSION,
        "v": classes.v,
        "H": ",".join(map(str, classes.subgroup.generators)),
        "n": classes.class_count,
        "classes": ",".join(map(str, classes.labels)),
        **header,
        "count": count,
    }
    write_kv(f"{prefix}.meta", meta)
    return meta


def _batched(items: Iterable, size: int) -> Iterator[list]:
    it = iter(items)
    while chunk := list(itertools.islice(it, size)):
        yield chunk


def write_kv(path: str | os.PathLike, data: dict) -> None:
    with open(path, "w") as fh:
        for key, value in data.items():
            fh.write(f"{key}={value}\n")


def read_kv(path: str | os.PathLike) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def read_multiplicities(path: str | os.PathLike, n: int) -> np.ndarray:
    """Load an ``F'`` file as an (N, n) int64 array."""
    flat = np.fromfile(path, dtype=np.int64, sep=" ")
    if flat.size % n:
        raise ValueError(f"{path}: {flat.size} values do not form rows of length {n}")
    return flat.reshape(-1, n)


def read_label_line(path: str | os.PathLike, line_no: int) -> tuple[int, ...]:
    """Orbit labels stored on 1-based line ``line_no`` of an ``F`` file."""
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            if i == line_no:
                return tuple(int(x) for x in line.split())
    raise IndexError(f"{path} has fewer than {line_no} lines")
