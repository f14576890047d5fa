"""Four-list matching: find a1 + a2 + a3 + a4 = s with one tuple from each list.

The search is meet-in-the-middle over 64-bit linear hashes.  With
``B1 = floor(s/2) - A3`` and ``B2 = ceil(s/2) - A4`` the problem becomes
``a1 + a2 = b1 + b2``.  Every tuple is compressed to ``h(t)``, a random linear
combination of its byte-packed words, so ``h(a1) + h(a2) = h(b1) + h(b2)``
holds for every true match.  Pair sums are split into ``M`` shards by residue
mod ``M``; a shard builds a linear-probing table of its ``h(a1) + h(a2)``
sums and probes it with the ``h(b1) + h(b2)`` sums of the same residue.
Hash hits are re-checked on the exact tuples, so collisions never surface.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numba
import numpy as np

log = logging.getLogger(__name__)

BYTE_RANGE = 127
MAX_LOAD = 0.5


class RangeOverflow(ValueError):
    pass


class NegativeBEntry(ValueError):
    pass


class LineOutOfRange(IndexError):
    pass


@dataclass(frozen=True)
class MatchProblem:
    lists: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    target: np.ndarray

    @classmethod
    def from_lists(cls, lists: Sequence, target: Sequence[int] | int, n: int | None = None) -> MatchProblem:
        arrays = []
        for lst in lists:
            arr = np.asarray(lst, dtype=np.int64)
            if arr.ndim == 1 and n is not None:
                arr = arr.reshape(-1, n)
            arrays.append(arr)
        if len(arrays) != 4:
            raise ValueError("exactly four lists are required")
        n = n if n is not None else next((a.shape[1] for a in arrays if a.ndim == 2), None)
        arrays = [a.reshape(-1, n) if a.size == 0 else a for a in arrays]
        if np.isscalar(target):
            target = np.full(n, int(target), dtype=np.int64)
        target = np.asarray(target, dtype=np.int64)
        for a in arrays:
            if a.ndim != 2 or a.shape[1] != n:
                raise ValueError(f"every tuple must have length {n}")
        if target.shape != (n,):
            raise ValueError(f"target must have length {n}")
        return cls(tuple(arrays), target)

    @property
    def n(self) -> int:
        return self.target.shape[0]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(a.shape[0] for a in self.lists)


class MatchResult(NamedTuple):
    lines: tuple[int, int, int, int]
    verified: bool


@dataclass(frozen=True)
class Halves:
    b1: np.ndarray
    b2: np.ndarray

    @property
    def nonnegative(self) -> bool:
        return bool((self.b1 >= 0).all() and (self.b2 >= 0).all())


def halve_target(problem: MatchProblem, strict: bool = False) -> Halves:
    """B1 = floor(s/2) - A3 and B2 = ceil(s/2) - A4, element-wise."""
    lo = problem.target // 2
    hi = problem.target - lo
    halves = Halves(lo - problem.lists[2], hi - problem.lists[3])
    if strict and not halves.nonnegative:
        raise NegativeBEntry("halving the target produced negative entries")
    return halves


# --- linear hash ----------------------------------------------------------------


@dataclass(frozen=True)
class LinearHasher:
    n: int
    offsets: np.ndarray
    coefficients: np.ndarray
    seed: int
    packing: str = "byte"

    @property
    def word_count(self) -> int:
        return len(self.coefficients)

    def words(self, tuples: np.ndarray, check: bool = True) -> np.ndarray:
        """Offset-adjusted tuples packed into uint64 words (one row per tuple).

        Packing is the integer sum of e_j * 256**j, so it is linear for any
        entries.  ``check`` enforces [0, 127], the range in which distinct
        tuples (and their pair sums) pack to distinct words.
        """
        t = np.atleast_2d(np.asarray(tuples, dtype=np.int64)) - self.offsets
        if self.packing == "word":
            return t.astype(np.uint64)
        if check and t.size and (t.min() < 0 or t.max() > BYTE_RANGE):
            bad = int(np.flatnonzero(((t < 0) | (t > BYTE_RANGE)).any(axis=0))[0])
            raise RangeOverflow(f"coordinate {bad} leaves [0, {BYTE_RANGE}] after offset")
        pad = (-self.n) % 8
        t = np.pad(t, ((0, 0), (0, pad))).astype(np.uint64).reshape(t.shape[0], -1, 8)
        shifts = (np.arange(8, dtype=np.uint64) * np.uint64(8))
        return (t << shifts).sum(axis=2, dtype=np.uint64)

    def hash_many(self, tuples: np.ndarray, check: bool = True) -> np.ndarray:
        w = self.words(tuples, check)
        return (w * self.coefficients).sum(axis=1, dtype=np.uint64)

    def __call__(self, t: Sequence[int]) -> int:
        return int(self.hash_many(np.asarray(t, dtype=np.int64).reshape(1, -1))[0])

    def manifest(self) -> dict:
        return {
            "hash_seed": self.seed,
            "packing": self.packing,
            "offsets": ",".join(map(str, self.offsets.tolist())),
            "coefficients": ",".join(map(str, self.coefficients.tolist())),
        }


def build_hasher(lists: Iterable[np.ndarray], seed: int, packing: str = "auto") -> LinearHasher:
    """Per-coordinate offsets are the minimum over all lists.

    ``packing="byte"`` packs 8 coordinates per word and needs every coordinate
    range to fit in [0, 127]; ``"word"`` spends one word per coordinate and has
    no range limit; ``"auto"`` picks byte packing whenever it fits.
    """
    lists = [np.atleast_2d(np.asarray(a, dtype=np.int64)) for a in lists]
    n = max(a.shape[1] for a in lists)
    nonempty = [a for a in lists if a.size]
    if nonempty:
        lo = np.min([a.min(axis=0) for a in nonempty], axis=0)
        hi = np.max([a.max(axis=0) for a in nonempty], axis=0)
    else:
        lo = hi = np.zeros(n, dtype=np.int64)
    span = hi - lo
    if packing == "auto":
        packing = "byte" if (span <= BYTE_RANGE).all() else "word"
    if packing == "byte" and (span > BYTE_RANGE).any():
        bad = int(np.argmax(span))
        raise RangeOverflow(f"coordinate {bad} spans {int(span[bad])} > {BYTE_RANGE}")
    if packing not in ("byte", "word"):
        raise ValueError(f"unknown packing {packing!r}")
    words = -(-n // 8) if packing == "byte" else n
    rng = np.random.default_rng(seed)
    coeffs = rng.integers(0, 2**64 - 1, size=words, dtype=np.uint64, endpoint=True) | np.uint64(1)
    return LinearHasher(n, lo.astype(np.int64), coeffs, seed, packing)


def pack_tuple(hasher: LinearHasher, t: Sequence[int]) -> int:
    return hasher(t)


# --- shard kernels --------------------------------------------------------------

_U21 = np.uint64(21)
_U24 = np.uint64(24)
_U14 = np.uint64(14)
_U28 = np.uint64(28)
_U31 = np.uint64(31)
_U265 = np.uint64(265)
_U21M = np.uint64(21)
_ONE = np.uint64(1)


@numba.njit(cache=True, nogil=True)
def _wang64(key):
    # Thomas Wang's 64-bit integer mix; picks the home slot.  The raw keys of
    # one shard share their low bits, so they cannot be used directly.
    key = (~key) + (key << _U21)
    key = key ^ (key >> _U24)
    key = key * _U265
    key = key ^ (key >> _U14)
    key = key * _U21M
    key = key ^ (key >> _U28)
    key = key + (key << _U31)
    return key


@numba.njit(cache=True, nogil=True)
def _grow(buf, used):
    out = np.empty((buf.shape[0] * 2, buf.shape[1]), dtype=buf.dtype)
    out[:used] = buf[:used]
    return out


@numba.njit(cache=True, nogil=True)
def _shard_kernel(shard, mask, outer_res, probe_res,
                  ha, oa, sa, hb, ob, sb,
                  hc, oc, sc, hd, od, sd,
                  ta, tb, tc, td):
    """Process one residue class of pair sums.

    (ha, oa, sa) are the hashes, residue-sorted order and CSR bucket starts of
    list A1; likewise A2, B1, B2.  ``outer_res`` holds the residues with a
    nonempty A1 bucket and ``probe_res`` those with a nonempty B1 bucket.
    Returns matches as 0-based (l1, l2, l3, l4) rows and a stats vector
    (inserted, probed, hits, collisions, capacity).
    """
    count = 0
    for r in outer_res:
        q = (shard - r) & mask
        count += (sa[r + 1] - sa[r]) * (sb[q + 1] - sb[q])
    cap = 8
    while cap * MAX_LOAD < count:
        cap *= 2
    cmask = np.uint64(cap - 1)
    # one slot per distinct key; pairs sharing a key hang off it in a chain,
    # so repeated multiplicity vectors do not lengthen the probe clusters
    keys = np.empty(cap, dtype=np.uint64)
    head = np.full(cap, -1, dtype=np.int64)
    e_left = np.empty(count, dtype=np.int64)
    e_right = np.empty(count, dtype=np.int64)
    e_next = np.empty(count, dtype=np.int64)

    e = 0
    for r in outer_res:
        q = (shard - r) & mask
        for i in range(sa[r], sa[r + 1]):
            p1 = oa[i]
            k1 = ha[p1]
            for j in range(sb[q], sb[q + 1]):
                p2 = ob[j]
                key = k1 + hb[p2]
                slot = _wang64(key) & cmask
                while head[slot] >= 0 and keys[slot] != key:
                    slot = (slot + _ONE) & cmask
                if head[slot] < 0:
                    keys[slot] = key
                e_left[e] = p1
                e_right[e] = p2
                e_next[e] = head[slot]
                head[slot] = e
                e += 1

    out = np.empty((16, 4), dtype=np.int64)
    found = 0
    probed = 0
    hits = 0
    collisions = 0
    n = ta.shape[1]
    for r in probe_res:
        q = (shard - r) & mask
        if sd[q + 1] == sd[q]:
            continue
        for i in range(sc[r], sc[r + 1]):
            p3 = oc[i]
            k3 = hc[p3]
            for j in range(sd[q], sd[q + 1]):
                p4 = od[j]
                key = k3 + hd[p4]
                probed += 1
                slot = _wang64(key) & cmask
                while head[slot] >= 0 and keys[slot] != key:
                    slot = (slot + _ONE) & cmask
                e = head[slot]
                while e >= 0:
                    hits += 1
                    p1 = e_left[e]
                    p2 = e_right[e]
                    ok = True
                    for c in range(n):
                        if ta[p1, c] + tb[p2, c] != tc[p3, c] + td[p4, c]:
                            ok = False
                            break
                    if ok:
                        if found == out.shape[0]:
                            out = _grow(out, found)
                        out[found, 0] = p1
                        out[found, 1] = p2
                        out[found, 2] = p3
                        out[found, 3] = p4
                        found += 1
                    else:
                        collisions += 1
                    e = e_next[e]
    stats = np.array([count, probed, hits, collisions, cap], dtype=np.int64)
    return out[:found], stats


@dataclass(frozen=True)
class _Buckets:
    hashes: np.ndarray
    order: np.ndarray
    starts: np.ndarray

    @classmethod
    def build(cls, hashes: np.ndarray, M: int) -> _Buckets:
        res = (hashes & np.uint64(M - 1)).astype(np.int64)
        order = np.argsort(res, kind="stable")
        starts = np.searchsorted(res[order], np.arange(M + 1)).astype(np.int64)
        return cls(hashes, order.astype(np.int64), starts)

    def nonempty(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self.starts)).astype(np.int64)


STAT_NAMES = ("pairs_inserted", "pairs_probed", "hash_hits", "collisions", "capacity")


@dataclass
class MatchRun:
    results: list[MatchResult]
    hasher: LinearHasher
    M: int
    shards: range
    stop_on_first: bool
    workers: int
    fallback: str = ""
    shard_stats: dict[int, np.ndarray] = field(default_factory=dict)
    elapsed: float = 0.0

    def totals(self) -> dict[str, int]:
        tot = np.zeros(len(STAT_NAMES), dtype=np.int64)
        for st in self.shard_stats.values():
            tot += st
        out = dict(zip(STAT_NAMES, tot.tolist()))
        out["capacity"] = max((int(st[4]) for st in self.shard_stats.values()), default=0)
        return out

    def manifest(self) -> dict:
        return {
            **self.hasher.manifest(),
            "shards": self.M,
            "shard_range": f"{self.shards.start}..{self.shards.stop}",
            "stop_on_first": int(self.stop_on_first),
            "fallback": self.fallback or "none",
        }


def default_workers() -> int:
    env = os.environ.get("SDSFORGE_WORKERS")
    if env:
        return max(1, int(env))
    return 1


def match(
    problem: MatchProblem,
    M: int = 1,
    shard_range: Iterable[int] | None = None,
    seed: int = 0,
    stop_on_first: bool = False,
    workers: int | None = None,
    packing: str = "auto",
) -> MatchRun:
    """Run the sharded matcher and keep hasher, stats and timing alongside the results."""
    if M < 1 or M & (M - 1):
        raise ValueError(f"shard modulus must be a power of two, got {M}")
    shards = range(M) if shard_range is None else shard_range
    if not isinstance(shards, range):
        shards = range(min(shards), max(shards) + 1)
    if shards.start < 0 or shards.stop > M:
        raise ValueError(f"shard range {shards} is not inside [0, {M})")
    workers = workers or default_workers()

    a1, a2 = problem.lists[0], problem.lists[1]
    halves = halve_target(problem)
    fallback = ""
    if not halves.nonnegative:
        fallback = "negative B entries; common per-coordinate re-offset"
        log.info("halved target has negative entries, re-offsetting all lists")
    hasher = build_hasher([a1, a2, halves.b1, halves.b2], seed, packing)
    if hasher.packing == "word" and packing == "auto":
        fallback = (fallback + "; " if fallback else "") + "range > 127, one coordinate per word"
        log.info("coordinate range exceeds %d, packing one coordinate per word", BYTE_RANGE)

    # identical inputs are hashed and bucketed once
    cache: dict[int, _Buckets] = {}

    def buckets(arr):
        key = id(arr)
        if key not in cache:
            cache[key] = _Buckets.build(hasher.hash_many(arr) if arr.size else np.empty(0, np.uint64), M)
        return cache[key]

    ba, bb = buckets(a1), buckets(a2)
    bc, bd = buckets(halves.b1), buckets(halves.b2)
    # loop over whichever A-side list has fewer occupied buckets
    swap = len(bb.nonempty()) < len(ba.nonempty())
    ta, tb = (a2, a1) if swap else (a1, a2)
    xa, xb = (bb, ba) if swap else (ba, bb)
    outer = xa.nonempty()
    probe = bc.nonempty()
    mask = M - 1

    def run_shard(i):
        found, st = _shard_kernel(
            i, mask, outer, probe,
            xa.hashes, xa.order, xa.starts, xb.hashes, xb.order, xb.starts,
            bc.hashes, bc.order, bc.starts, bd.hashes, bd.order, bd.starts,
            ta, tb, halves.b1, halves.b2,
        )
        if swap:
            found = found[:, [1, 0, 2, 3]]
        return found, st

    t0 = time.perf_counter()
    per_shard: dict[int, np.ndarray] = {}
    stats: dict[int, np.ndarray] = {}
    best = None
    with ThreadPoolExecutor(max_workers=workers) as pool:
        todo = iter(shards)
        pending = {}

        def submit_next():
            for i in todo:
                if best is not None and i > best:
                    return
                pending[pool.submit(run_shard, i)] = i
                return

        for _ in range(workers):
            submit_next()
        while pending:
            done, _ = wait(pending, return_when=FIRST_COMPLETED)
            for fut in done:
                i = pending.pop(fut)
                found, st = fut.result()
                per_shard[i] = found
                stats[i] = st
                if stop_on_first and len(found) and (best is None or i < best):
                    best = i
                submit_next()
    elapsed = time.perf_counter() - t0

    if stop_on_first:
        chosen = [per_shard[best]] if best is not None else []
    else:
        chosen = [per_shard[i] for i in sorted(per_shard)]
    rows = np.concatenate(chosen) if chosen else np.empty((0, 4), np.int64)
    # each quadruple is emitted once (its A-pair lives in exactly one shard); sort them
    rows = rows[np.lexsort(rows.T[::-1])] if len(rows) else rows
    if stop_on_first:
        rows = rows[:1]
    ok = _exact_rows(problem, rows)
    if not ok.all():
        raise AssertionError("matcher emitted an unverified quadruple")
    results = [MatchResult(tuple(line), True) for line in (rows + 1).tolist()]
    return MatchRun(results, hasher, M, shards, stop_on_first, workers, fallback, stats, elapsed)


def run_match(
    problem: MatchProblem,
    M: int = 1,
    shard_range: Iterable[int] | None = None,
    seed: int = 0,
    stop_on_first: bool = False,
    workers: int | None = None,
) -> list[MatchResult]:
    """Verified matches as 1-based line quadruples, sorted."""
    return match(problem, M, shard_range, seed, stop_on_first, workers).results


def _exact_rows(problem: MatchProblem, rows: np.ndarray) -> np.ndarray:
    """Exact per-row check of 0-based (l1, l2, l3, l4) rows."""
    total = sum(lst[rows[:, c]] for c, lst in enumerate(problem.lists))
    return (np.asarray(total) == problem.target).all(axis=1) if len(rows) else np.ones(0, dtype=bool)


def _exact_result(problem: MatchProblem, rows0: tuple[int, ...]) -> MatchResult:
    total = sum(lst[i] for lst, i in zip(problem.lists, rows0))
    return MatchResult(tuple(i + 1 for i in rows0), bool(np.array_equal(total, problem.target)))


def verify_quadruple(problem: MatchProblem, l1: int, l2: int, l3: int, l4: int) -> MatchResult:
    """Exact check of 1-based line numbers against the original four-list problem."""
    lines = (l1, l2, l3, l4)
    for pos, (line, size) in enumerate(zip(lines, problem.sizes)):
        if not 1 <= line <= size:
            raise LineOutOfRange(f"line {line} of list {pos + 1} is outside 1..{size}")
    return _exact_result(problem, tuple(x - 1 for x in lines))
