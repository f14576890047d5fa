"""Circulant blocks, the Goethals-Seidel array and exact verification.

Matrices are dense ``int8`` arrays of +1/-1.  Products are formed with
float64 BLAS: every partial sum is an integer of magnitude at most the
order, far below 2**53, so the result is exact.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .zmod import orbit_table, subgroup_closure

MAGIC = b"SDSHAD01"


class ResidueOutOfRange(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


def sign_sequence(v: int, X) -> np.ndarray:
    """a_i = -1 for i in X, +1 otherwise."""
    a = np.ones(v, dtype=np.int8)
    idx = np.asarray(sorted(X), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= v):
        raise ResidueOutOfRange(f"block has residues outside [0, {v})")
    a[idx] = -1
    return a


def circulant_from_block(v: int, X) -> np.ndarray:
    """v x v circulant whose row r is the first row shifted right r places."""
    a = sign_sequence(v, X)
    r = np.arange(v)
    return a[(r[None, :] - r[:, None]) % v]


def back_diagonal(v: int) -> np.ndarray:
    return np.eye(v, dtype=np.int8)[::-1]


def goethals_seidel(P1, P2, P3, P4) -> np.ndarray:
    mats = [np.asarray(P, dtype=np.int8) for P in (P1, P2, P3, P4)]
    v = mats[0].shape[0]
    if any(P.shape != (v, v) for P in mats):
        raise DimensionMismatch("Goethals-Seidel blocks must all be v x v")
    P1, P2, P3, P4 = mats
    # right-multiplying by R reverses the column order
    R = lambda P: P[:, ::-1]  # noqa: E731
    return np.block([
        [P1, R(P2), R(P3), R(P4)],
        [-R(P2), P1, -R(P4.T), R(P3.T)],
        [-R(P3), R(P4.T), P1, -R(P2.T)],
        [-R(P4), -R(P3.T), R(P2.T), P1],
    ]).astype(np.int8)


def gram(H: np.ndarray) -> np.ndarray:
    F = np.asarray(H, dtype=np.float64)
    if F.shape[0] >= 2**26:
        raise ValueError("order too large for exact float64 accumulation")
    return (F @ F.T).astype(np.int64)


def is_sign_matrix(H: np.ndarray) -> bool:
    H = np.asarray(H)
    return H.ndim == 2 and H.shape[0] == H.shape[1] and bool(np.isin(H, (-1, 1)).all())


def verify_hadamard(H: np.ndarray) -> bool:
    """H H^T == m I exactly."""
    if not is_sign_matrix(H):
        return False
    m = H.shape[0]
    return bool(np.array_equal(gram(H), m * np.eye(m, dtype=np.int64)))


def verify_skew_hadamard(H: np.ndarray) -> bool:
    """Hadamard and H + H^T == 2 I."""
    if not verify_hadamard(H):
        return False
    H = np.asarray(H, dtype=np.int64)
    return bool(np.array_equal(H + H.T, 2 * np.eye(H.shape[0], dtype=np.int64)))


def is_skew_block(v: int, X) -> bool:
    """0 not in X and exactly one of i, v-i in X for every nonzero i."""
    inside = np.zeros(v, dtype=bool)
    inside[list(X)] = True
    if v % 2 == 0 or inside[0]:
        return False
    i = np.arange(1, v)
    return bool(np.all(inside[i] != inside[v - i]))


def skew_block_detect(blocks_or_cert) -> int | None:
    """Position of the first skew block, or None."""
    if isinstance(blocks_or_cert, SdsCertificate):
        v, blocks = blocks_or_cert.v, blocks_or_cert.blocks()
    else:
        v, blocks = blocks_or_cert
    for i, X in enumerate(blocks):
        if is_skew_block(v, X):
            return i
    return None


# --- certificates ---------------------------------------------------------------


@dataclass(frozen=True)
class SdsCertificate:
    """Four orbit-label index sets over (Z_v, H) claimed to form an SDS."""

    v: int
    generators: tuple[int, ...]
    k: tuple[int, ...]
    lam: int
    index_sets: tuple[tuple[int, ...], ...]
    name: str = ""
    notes: tuple[str, ...] = field(default=(), compare=False)

    def table(self):
        return orbit_table(subgroup_closure(self.v, self.generators))

    def blocks(self) -> list[list[int]]:
        t = self.table()
        return [t.union(labels) for labels in self.index_sets]

    def format(self) -> str:
        lines = [f"# {note}" for note in self.notes]
        if self.name:
            lines.append(f"name={self.name}")
        lines += [
            f"v={self.v}",
            f"H={','.join(map(str, self.generators))}",
            f"params={self.v};{','.join(map(str, self.k))};{self.lam}",
        ]
        for key, labels in zip("JKLM", self.index_sets):
            lines.append(f"{key}={','.join(map(str, labels))}")
        return "\n".join(lines) + "\n"


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def parse_certificate(text: str) -> SdsCertificate:
    fields, notes = {}, []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            notes.append(line.lstrip("# "))
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"malformed certificate line: {raw!r}")
        fields[key.strip()] = value.strip()
    missing = {"v", "H", "params", "J", "K", "L", "M"} - set(fields)
    if missing:
        raise ValueError(f"certificate is missing {sorted(missing)}")
    pv, pk, plam = fields["params"].split(";")[:3]
    v = int(fields["v"])
    if int(pv) != v:
        raise ValueError("params line disagrees with v")
    return SdsCertificate(
        v=v,
        generators=_ints(fields["H"]),
        k=_ints(pk),
        lam=int(plam),
        index_sets=tuple(_ints(fields[key]) for key in "JKLM"),
        name=fields.get("name", ""),
        notes=tuple(notes),
    )


def load_certificate(path: str | os.PathLike) -> SdsCertificate:
    with open(path) as fh:
        return parse_certificate(fh.read())


@dataclass
class SdsReport:
    v: int
    lam: int
    cardinalities: tuple[int, ...]
    cardinalities_ok: bool
    lambda_consistent: bool
    violations: list[tuple[int, int]]
    paf_ok: bool
    skew_block: int | None  # 0-based position; printed 1-based

    @property
    def differences_ok(self) -> bool:
        return not self.violations

    @property
    def passed(self) -> bool:
        return self.cardinalities_ok and self.lambda_consistent and self.differences_ok and self.paf_ok

    def format(self) -> str:
        lines = [
            f"v={self.v} lambda={self.lam} cardinalities={list(self.cardinalities)}",
            f"cardinalities match params: {self.cardinalities_ok}",
            f"lambda == sum(k) - v: {self.lambda_consistent}",
            f"difference condition: {self.differences_ok}",
            f"PAF identity: {self.paf_ok}",
            f"skew block: {self.skew_block + 1 if self.skew_block is not None else 'none'} (1-based)",
        ]
        for c, count in self.violations[:50]:
            lines.append(f"  residue {c}: {count} ordered pairs (want {self.lam})")
        if len(self.violations) > 50:
            lines.append(f"  ... {len(self.violations) - 50} more")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines) + "\n"


def difference_counts(v: int, blocks: Sequence[Sequence[int]]) -> np.ndarray:
    """Number of ordered pairs (a, b), a != b, inside one block with a - b = c."""
    total = np.zeros(v, dtype=np.int64)
    for X in blocks:
        x = np.asarray(list(X), dtype=np.int64)
        d = np.subtract.outer(x, x) % v
        total += np.bincount(d.ravel(), minlength=v)
        total[0] -= len(x)
    return total


def periodic_autocorrelation(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    return np.array([int(a @ np.roll(a, s)) for s in range(len(a))], dtype=np.int64)


def paf_identity_holds(v: int, blocks: Sequence[Sequence[int]]) -> bool:
    """sum_i [X_i][X_i]^T == 4v I, via periodic autocorrelation of the sign rows."""
    total = sum(periodic_autocorrelation(sign_sequence(v, X)) for X in blocks)
    want = np.zeros(v, dtype=np.int64)
    want[0] = 4 * v
    return bool(np.array_equal(total, want))


def verify_blocks(v: int, blocks: Sequence[Sequence[int]], k: Sequence[int], lam: int) -> SdsReport:
    cards = tuple(len(X) for X in blocks)
    counts = difference_counts(v, blocks)
    violations = [(c, int(counts[c])) for c in range(1, v) if counts[c] != lam]
    return SdsReport(
        v=v,
        lam=lam,
        cardinalities=cards,
        cardinalities_ok=Counter(cards) == Counter(k),
        lambda_consistent=lam == sum(k) - v,
        violations=violations,
        paf_ok=paf_identity_holds(v, blocks),
        skew_block=skew_block_detect((v, blocks)) if v % 2 else None,
    )


def verify_sds(cert: SdsCertificate) -> SdsReport:
    return verify_blocks(cert.v, cert.blocks(), cert.k, cert.lam)


def hadamard_from_blocks(v: int, blocks: Sequence[Sequence[int]], skew_first: bool = True) -> np.ndarray:
    """Goethals-Seidel matrix of order 4v; a skew block, if any, becomes P1."""
    blocks = list(blocks)
    if skew_first:
        pos = skew_block_detect((v, blocks)) if v % 2 else None
        if pos:
            blocks.insert(0, blocks.pop(pos))
    return goethals_seidel(*(circulant_from_block(v, X) for X in blocks))


def hadamard_from_certificate(cert: SdsCertificate) -> np.ndarray:
    return hadamard_from_blocks(cert.v, cert.blocks())


# --- matrix files ---------------------------------------------------------------


def format_pm(H: np.ndarray) -> str:
    rows = np.where(np.asarray(H) > 0, ord("+"), ord("-")).astype(np.uint8)
    return "\n".join(r.tobytes().decode() for r in rows) + "\n"


def write_pm(path: str | os.PathLike, H: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write(format_pm(H))


def read_pm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        rows = [line.rstrip(b"\r\n") for line in fh if line.strip()]
    arr = np.frombuffer(b"".join(rows), dtype=np.uint8).reshape(len(rows), -1)
    if not np.isin(arr, (ord("+"), ord("-"))).all():
        raise ValueError(f"{path}: rows must contain only '+' and '-'")
    return np.where(arr == ord("+"), 1, -1).astype(np.int8)


def write_binary(path: str | os.PathLike, H: np.ndarray) -> None:
    """16-byte header (magic, little-endian uint64 order) then bit-packed rows, 1 = -1."""
    H = np.asarray(H)
    with open(path, "wb") as fh:
        fh.write(MAGIC + np.uint64(H.shape[0]).astype("<u8").tobytes())
        fh.write(np.packbits(H < 0, axis=1).tobytes())


def read_binary(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if head[:8] != MAGIC:
            raise ValueError(f"{path}: bad magic")
        m = int(np.frombuffer(head[8:], dtype="<u8")[0])
        body = np.frombuffer(fh.read(), dtype=np.uint8).reshape(m, -1)
    bits = np.unpackbits(body, axis=1)[:, :m]
    return np.where(bits == 1, -1, 1).astype(np.int8)
