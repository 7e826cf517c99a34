"""On-board measurement node with port-aggregated 64-bit counters.

Each slot is one 64-bit word holding four 16-bit per-port counts; a packet
leaving port p adds ``units << 16 * (p - 1)``. Subfields saturate at 0xFFFF
instead of carrying into the neighbouring port.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoActiveSeed, StaleSeed
from .seeds import SeedTable, cantor_pair, cantor_pair_array

N_PORTS = 4
SUBFIELD_BITS = 16
SUBFIELD_MAX = (1 << SUBFIELD_BITS) - 1
COUNTER_BYTES = 8
MIN_PACKET_BYTES = 64

_SHIFTS = np.array([SUBFIELD_BITS * p for p in range(N_PORTS)], dtype=np.uint64)
_MASK = np.uint64(SUBFIELD_MAX)


def packet_units(size_bytes: int) -> int:
    """Packets in 64-byte units, rounded up (120 B counts as 2)."""
    if size_bytes < 1:
        raise ValueError("packet size must be at least one byte")
    return -(-size_bytes // MIN_PACKET_BYTES)


def port_increment(port: int) -> int:
    """Jump value added to the 64-bit word for one unit on ``port``."""
    _check_port(port)
    return 1 << (SUBFIELD_BITS * (port - 1))


def extract(raw: int, port: int) -> int:
    _check_port(port)
    return (int(raw) >> (SUBFIELD_BITS * (port - 1))) & SUBFIELD_MAX


def split_word(raw) -> np.ndarray:
    """(..., 4) array of subfields from 64-bit words."""
    raw = np.asarray(raw, dtype=np.uint64)
    return ((raw[..., None] >> _SHIFTS) & _MASK).astype(np.int64)


def join_word(sub) -> np.ndarray:
    sub = np.asarray(sub, dtype=np.uint64)
    return np.bitwise_or.reduce(sub << _SHIFTS, axis=-1)


def _check_port(port: int) -> None:
    if not 1 <= port <= N_PORTS:
        raise ValueError(f"port must be in 1..{N_PORTS}, got {port}")


@dataclass(frozen=True)
class PacketRecord:
    src: int
    dst: int
    size_bytes: int = MIN_PACKET_BYTES
    out_port: int = 0  # 0 until a forwarding decision picks a port
    t_s: float = 0.0

    def __post_init__(self):
        if self.size_bytes < 1:
            raise ValueError("size_bytes must be >= 1")
        if self.out_port:
            _check_port(self.out_port)


class Outcome(enum.Enum):
    COUNTED = "counted"
    OVERFLOWED = "overflowed"  # a subfield hit saturation
    UNKNOWN = "unknown"  # no flows were predicted for this node


@dataclass(frozen=True)
class Readback:
    """Immutable copy of one epoch's counters as sent to the ground."""

    epoch: int
    sat_id: int
    counters: np.ndarray
    saturation: np.ndarray  # (slots, 4) bool
    overflow: int
    modulus: int

    def records(self):
        """CSV rows: epoch, sat_id, slot, raw_64bit, saturation mask (bit p-1)."""
        masks = (self.saturation.astype(np.int64) << np.arange(N_PORTS)).sum(axis=1)
        for slot in np.flatnonzero(self.counters):
            yield (self.epoch, self.sat_id, int(slot), int(self.counters[slot]), int(masks[slot]))

    @property
    def saturations(self) -> int:
        return int(self.saturation.sum())


def write_readback_csv(readbacks, fh, scheme: str | None = None) -> None:
    head = "epoch,sat_id,slot,raw_64bit,saturation_flags"
    fh.write(("scheme," + head if scheme else head) + "\n")
    for rb in readbacks:
        for row in rb.records():
            line = ",".join(map(str, row))
            fh.write((f"{scheme},{line}" if scheme else line) + "\n")


class CsNode:
    """One satellite's CountingStars pipeline.

    ``memory_slots`` caps the counter array; when it is smaller than the
    seeded modulus the slot index becomes ``(t mod h) mod slots``.
    """

    def __init__(self, sat_id: int, lanes: int = 1, memory_slots: int | None = None):
        if lanes < 1:
            raise ValueError("need at least one parser lane per port")
        if memory_slots is not None and memory_slots < 1:
            raise ValueError("memory budget must allow at least one slot")
        self.sat_id = sat_id
        self.lanes = lanes
        self.memory_slots = memory_slots
        self.active_seed: SeedTable | None = None
        self.counters = np.zeros(1, dtype=np.uint64)
        self.saturation = np.zeros((1, N_PORTS), dtype=bool)
        self.overflow_counter = 0
        self.previous: Readback | None = None
        self.rr_cursor = [0] * N_PORTS
        self.lane_hits = np.zeros((N_PORTS, lanes), dtype=np.int64)

    @classmethod
    def with_memory(cls, sat_id: int, memory_bytes: int | None, lanes: int = 1) -> "CsNode":
        slots = None if memory_bytes is None else max(1, memory_bytes // COUNTER_BYTES)
        return cls(sat_id, lanes, slots)

    # -- control path ---------------------------------------------------

    @property
    def slots(self) -> int:
        return len(self.counters)

    @property
    def memory_bytes(self) -> int:
        return self.slots * COUNTER_BYTES

    def install_seed(self, seed: SeedTable) -> Readback | None:
        """Activate a newer seed; returns the finished epoch's readback.

        The returned snapshot is also kept as ``previous`` so it can be
        retransmitted until the next install.
        """
        if self.active_seed is not None and seed.epoch <= self.active_seed.epoch:
            raise StaleSeed(f"seed epoch {seed.epoch} <= active {self.active_seed.epoch}")
        readback = None
        if self.active_seed is not None:
            readback = self._snapshot()
            self.previous = readback
        slots = seed.modulus if self.memory_slots is None else min(seed.modulus, self.memory_slots)
        slots = max(1, slots)
        self.active_seed = seed
        self.counters = np.zeros(slots, dtype=np.uint64)
        self.saturation = np.zeros((slots, N_PORTS), dtype=bool)
        self.overflow_counter = 0
        return readback

    def _snapshot(self) -> Readback:
        seed = self.active_seed
        counters = self.counters.copy()
        sat = self.saturation.copy()
        counters.setflags(write=False)
        sat.setflags(write=False)
        return Readback(seed.epoch, self.sat_id, counters, sat, self.overflow_counter, seed.modulus)

    def _require_seed(self) -> SeedTable:
        if self.active_seed is None:
            raise NoActiveSeed(f"satellite {self.sat_id} has no seed installed")
        return self.active_seed

    # -- data path ------------------------------------------------------

    def assign_parser(self, port: int) -> int:
        _check_port(port)
        lane = self.rr_cursor[port - 1]
        self.rr_cursor[port - 1] = (lane + 1) % self.lanes
        self.lane_hits[port - 1, lane] += 1
        return lane

    def slot_of(self, flow_id: int) -> int:
        seed = self._require_seed()
        return (flow_id % seed.modulus) % self.slots

    def update(self, pkt: PacketRecord, units: int | None = None) -> Outcome:
        seed = self._require_seed()
        _check_port(pkt.out_port)
        self.assign_parser(pkt.out_port)
        if units is None:
            units = packet_units(pkt.size_bytes)
        if seed.flow_count == 0:
            self.overflow_counter += units
            return Outcome.UNKNOWN
        t = cantor_pair(pkt.src, pkt.dst)
        m = (t % seed.modulus) % self.slots
        shift = SUBFIELD_BITS * (pkt.out_port - 1)
        raw = int(self.counters[m])
        sub = (raw >> shift) & SUBFIELD_MAX
        if sub + units > SUBFIELD_MAX:
            self.counters[m] = np.uint64(raw + ((SUBFIELD_MAX - sub) << shift))
            self.saturation[m, pkt.out_port - 1] = True
            return Outcome.OVERFLOWED
        self.counters[m] = np.uint64(raw + (units << shift))
        return Outcome.COUNTED

    def update_batch(self, src, dst, port, units=None) -> int:
        """Vectorised equivalent of repeated :meth:`update`; returns saturations hit.

        Saturating addition is order independent, so the result matches any
        sequential replay of the same packets.
        """
        seed = self._require_seed()
        src = np.asarray(src, dtype=np.int64)
        port = np.asarray(port, dtype=np.int64)
        units = np.ones(len(src), dtype=np.int64) if units is None else np.asarray(units, dtype=np.int64)
        if len(src) == 0:
            return 0
        if port.min() < 1 or port.max() > N_PORTS:
            raise ValueError("ports must be in 1..4")
        per_port = np.bincount(port - 1, minlength=N_PORTS)
        for p in range(N_PORTS):
            start = self.rr_cursor[p]
            k = int(per_port[p])
            full, rem = divmod(k, self.lanes)
            self.lane_hits[p] += full
            idx = (start + np.arange(rem)) % self.lanes
            self.lane_hits[p, idx] += 1
            self.rr_cursor[p] = (start + k) % self.lanes
        if seed.flow_count == 0:
            self.overflow_counter += int(units.sum())
            return 0
        t = cantor_pair_array(src, dst)
        slot = ((t % np.uint64(seed.modulus)) % np.uint64(self.slots)).astype(np.int64)
        add = np.zeros((self.slots, N_PORTS), dtype=np.int64)
        np.add.at(add, (slot, port - 1), units)
        touched = np.flatnonzero(add.any(axis=1))
        cur = split_word(self.counters[touched])
        new = cur + add[touched]
        sat = new > SUBFIELD_MAX
        newly = sat & ~self.saturation[touched]
        self.saturation[touched] |= sat
        self.counters[touched] = join_word(np.minimum(new, SUBFIELD_MAX))
        return int(newly.sum())

    def query(self, src: int, dst: int, port: int) -> int:
        _check_port(port)
        m = self.slot_of(cantor_pair(src, dst))
        return extract(int(self.counters[m]), port)

    def query_batch(self, src, dst) -> np.ndarray:
        """(n, 4) per-port counts for many flows at once."""
        seed = self._require_seed()
        t = cantor_pair_array(src, dst)
        slot = ((t % np.uint64(seed.modulus)) % np.uint64(self.slots)).astype(np.int64)
        return split_word(self.counters[slot])
