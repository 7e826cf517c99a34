"""Ground-side hash logic: Cantor flow identifiers and minimal perfect moduli."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import CantorOverflow, EmptySet, SeedSearchOverflow

FLOW_ID_BITS = 64
DEFAULT_SEARCH_FACTOR = 16


def cantor_pair(src: int, dst: int, bits: int | None = FLOW_ID_BITS) -> int:
    """pi(src, dst) = (src + dst)(src + dst + 1)/2 + dst.

    Python ints are unbounded; ``bits`` caps the result width the way a
    fixed-width register would (None disables the check).
    """
    if src < 0 or dst < 0:
        raise ValueError("Cantor pairing is defined on natural numbers")
    w = src + dst
    value = (w * (w + 1) >> 1) + dst
    if bits is not None and value >= 1 << bits:
        raise CantorOverflow(f"pi({src}, {dst}) = {value} needs more than {bits} bits")
    return value


def triangular(w: int) -> int:
    return w * (w + 1) // 2


def cantor_unpair(flow_id: int) -> tuple[int, int]:
    if flow_id < 0:
        raise ValueError("flow id must be non-negative")
    w = (math.isqrt(8 * flow_id + 1) - 1) // 2
    dst = flow_id - triangular(w)
    return w - dst, dst


def cantor_pair_array(src, dst) -> np.ndarray:
    """Vectorised pairing on uint64 (valid while ids fit in 64 bits)."""
    s = np.asarray(src, dtype=np.uint64)
    d = np.asarray(dst, dtype=np.uint64)
    w = s + d
    return (w * (w + np.uint64(1))) // np.uint64(2) + d


# ---------------------------------------------------------------------------
# minimal perfect modulus


def is_perfect_modulus(ids, h: int) -> bool:
    res = np.asarray(ids, dtype=np.int64) % h
    return len(np.unique(res)) == len(res)


def min_perfect_modulus(ids: Iterable[int], search_factor: int | None = DEFAULT_SEARCH_FACTOR) -> int:
    """Smallest h >= len(ids) with pairwise distinct residues ``id mod h``.

    Candidates are scanned upward from the pigeonhole bound; each is checked
    by residue uniqueness, which is the same test as "h divides no pairwise
    difference". ``h = max - min + 1`` always works, so the scan terminates;
    ``search_factor * n`` is an explicit cap on top of that.
    """
    arr = np.unique(np.fromiter((int(i) for i in ids), dtype=np.int64))
    n = len(arr)
    if n == 0:
        raise EmptySet("cannot seed an empty flow set")
    if n == 1:
        return 1
    span = int(arr[-1] - arr[0]) + 1
    limit = span if search_factor is None else min(span, search_factor * n)
    # batched scan: test a block of candidate moduli at once
    h = n
    block = max(8, min(256, 4_000_000 // n))
    while h <= limit:
        hs = np.arange(h, min(h + block, limit + 1), dtype=np.int64)
        res = np.sort(arr[:, None] % hs[None, :], axis=0)
        ok = ~np.any(res[1:] == res[:-1], axis=0)
        if ok.any():
            return int(hs[np.argmax(ok)])
        h = int(hs[-1]) + 1
    raise SeedSearchOverflow(
        f"no perfect modulus <= {limit} for {n} ids (span {span}); raise search_factor"
    )


def min_perfect_modulus_bruteforce(ids: Iterable[int]) -> int:
    """Reference oracle: try every h from 1 upward with the pairwise-difference test."""
    ids = sorted(set(int(i) for i in ids))
    if not ids:
        raise EmptySet("empty set")
    diffs = [b - a for i, a in enumerate(ids) for b in ids[i + 1 :]]
    h = 1
    while True:
        if all(d % h for d in diffs):
            return h
        h += 1


# ---------------------------------------------------------------------------
# seed tables


@dataclass(frozen=True)
class SeedTable:
    sat_id: int
    epoch: int
    modulus: int
    flow_count: int
    flow_ids: tuple[int, ...] = ()

    @property
    def h(self) -> int:
        return self.modulus

    @property
    def n(self) -> int:
        return self.flow_count

    def slot_of(self, flow_id: int) -> int:
        return flow_id % self.modulus

    def checksum(self) -> str:
        digest = hashlib.sha256(",".join(map(str, sorted(self.flow_ids))).encode()).hexdigest()
        return digest[:16]

    def contains(self, flow_id: int) -> bool:
        ids = self.flow_ids
        i = np.searchsorted(ids, flow_id)
        return i < len(ids) and ids[i] == flow_id


def build_seed_table(
    sat_id: int, epoch: int, flow_ids: Iterable[int], search_factor=DEFAULT_SEARCH_FACTOR
) -> SeedTable:
    ids = tuple(sorted(set(int(i) for i in flow_ids)))
    if not ids:
        # sentinel: the node still gets a table so it can flag unexpected traffic
        return SeedTable(sat_id, epoch, 1, 0, ())
    return SeedTable(sat_id, epoch, min_perfect_modulus(ids, search_factor), len(ids), ids)


def build_seed_tables(flow_sets: Sequence, search_factor=DEFAULT_SEARCH_FACTOR) -> list[SeedTable]:
    """One table per FlowSet (anything with sat_id, epoch and flow_ids())."""
    return [
        build_seed_table(fs.sat_id, fs.epoch, fs.flow_ids(), search_factor) for fs in flow_sets
    ]


def write_seed_records(tables: Iterable[SeedTable], fh) -> None:
    """Seed distribution artifact: ``epoch,sat_id,h,n,checksum``."""
    fh.write("epoch,sat_id,h,n,checksum\n")
    for t in tables:
        fh.write(f"{t.epoch},{t.sat_id},{t.modulus},{t.flow_count},{t.checksum()}\n")


def read_seed_records(fh) -> list[dict]:
    header = fh.readline().strip().split(",")
    out = []
    for line in fh:
        if not line.strip():
            continue
        row = dict(zip(header, line.strip().split(",")))
        for key in ("epoch", "sat_id", "h", "n"):
            row[key] = int(row[key])
        out.append(row)
    return out
