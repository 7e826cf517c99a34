"""Comparison sketches: Count-Min, Elastic Sketch and a FlowLIDAR reconstruction.

All use 32-bit counters and fixed per-row hash seeds. ``PortedBaseline`` runs
one instance per output port under a shared byte budget, which is how these
structures get port-level granularity.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

MASK64 = (1 << 64) - 1
COUNTER_BYTES = 4
COUNTER_MAX = (1 << 32) - 1
KEY_BYTES = 4


def mix64(x: int) -> int:
    """splitmix64 finaliser."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix64_array(x) -> np.ndarray:
    z = np.asarray(x, dtype=np.uint64) + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def row_seeds(base: int, count: int) -> list[int]:
    return [mix64(base * 0x100 + i) for i in range(count)]


class CountMinSketch:
    def __init__(self, width: int, depth: int = 3, seed: int = 1):
        if width < 1 or depth < 1:
            raise ValueError(f"width and depth must be positive, got {width}, {depth}")
        self.width = width
        self.depth = depth
        self.seeds = row_seeds(seed, depth)
        self._seed_arr = np.array(self.seeds, dtype=np.uint64)
        self.counters = np.zeros((depth, width), dtype=np.int64)

    @classmethod
    def from_memory(cls, memory_bytes: int, depth: int = 3, seed: int = 1) -> "CountMinSketch":
        width = max(1, memory_bytes // (COUNTER_BYTES * depth))
        return cls(width, depth, seed)

    @classmethod
    def from_error(cls, epsilon: float, delta: float, seed: int = 1) -> "CountMinSketch":
        return cls(math.ceil(math.e / epsilon), math.ceil(math.log(1 / delta)), seed)

    @property
    def memory_bytes(self) -> int:
        return self.width * self.depth * COUNTER_BYTES

    def _index(self, key: int, row: int) -> int:
        return mix64(key ^ self.seeds[row]) % self.width

    def _index_array(self, keys) -> np.ndarray:
        k = np.asarray(keys, dtype=np.uint64)
        h = mix64_array(k[None, :] ^ self._seed_arr[:, None])
        return (h % np.uint64(self.width)).astype(np.int64)

    def update(self, key: int, units: int = 1) -> None:
        for r in range(self.depth):
            i = self._index(key, r)
            self.counters[r, i] = min(COUNTER_MAX, self.counters[r, i] + units)

    def update_batch(self, keys, units=None) -> None:
        keys = np.asarray(keys)
        if len(keys) == 0:
            return
        units = np.ones(len(keys), dtype=np.int64) if units is None else np.asarray(units, dtype=np.int64)
        idx = self._index_array(keys)
        for r in range(self.depth):
            np.add.at(self.counters[r], idx[r], units)
        np.minimum(self.counters, COUNTER_MAX, out=self.counters)

    def query(self, key: int) -> int:
        return int(min(self.counters[r, self._index(key, r)] for r in range(self.depth)))

    def query_batch(self, keys) -> np.ndarray:
        keys = np.asarray(keys)
        if len(keys) == 0:
            return np.zeros(0, dtype=np.int64)
        idx = self._index_array(keys)
        return self.counters[np.arange(self.depth)[:, None], idx].min(axis=0)

    def clear(self) -> None:
        self.counters[:] = 0


class ElasticSketch:
    """Heavy part of ``ways``-entry buckets with vote eviction, CM light part.

    Heavy entries cost 8 bytes (key + vote with the flag bit packed in),
    plus 4 bytes of negative vote per bucket.
    """

    ENTRY_BYTES = 8
    VOTE_BYTES = 4

    def __init__(
        self,
        memory_bytes: int,
        heavy_fraction: float = 0.25,
        ways: int = 8,
        lam: float = 8.0,
        light_depth: int = 3,
        seed: int = 2,
    ):
        self.ways = ways
        self.lam = lam
        bucket_bytes = ways * self.ENTRY_BYTES + self.VOTE_BYTES
        self.n_buckets = int(memory_bytes * heavy_fraction) // bucket_bytes
        heavy_bytes = self.n_buckets * bucket_bytes
        self.light = CountMinSketch.from_memory(memory_bytes - heavy_bytes, light_depth, seed + 17)
        self._seed = mix64(seed)
        # per bucket: key -> [vote, flag]; negative votes separately
        self.buckets: list[dict[int, list]] = [{} for _ in range(self.n_buckets)]
        self.neg = [0] * self.n_buckets
        self._heavy_bytes = heavy_bytes

    @property
    def memory_bytes(self) -> int:
        return self._heavy_bytes + self.light.memory_bytes

    def _bucket(self, key: int) -> int:
        return mix64(key ^ self._seed) % self.n_buckets

    def update(self, key: int, units: int = 1) -> None:
        if self.n_buckets == 0:
            self.light.update(key, units)
            return
        b = self._bucket(key)
        bucket = self.buckets[b]
        entry = bucket.get(key)
        if entry is not None:
            entry[0] += units
            return
        if len(bucket) < self.ways:
            bucket[key] = [units, False]
            return
        self.neg[b] += units
        victim = min(bucket, key=lambda k: (bucket[k][0], k))
        if self.neg[b] / bucket[victim][0] >= self.lam:
            vote, _ = bucket.pop(victim)
            self.light.update(victim, vote)
            bucket[key] = [units, True]
            self.neg[b] = 0
        else:
            self.light.update(key, units)

    def query(self, key: int) -> int:
        if self.n_buckets:
            entry = self.buckets[self._bucket(key)].get(key)
            if entry is not None:
                vote, flag = entry
                return vote + (self.light.query(key) if flag else 0)
        return self.light.query(key)

    def update_batch(self, keys, units=None) -> None:
        units = [1] * len(keys) if units is None else units
        for k, u in zip(np.asarray(keys).tolist(), np.asarray(units).tolist()):
            self.update(k, u)

    def query_batch(self, keys) -> np.ndarray:
        return np.array([self.query(k) for k in np.asarray(keys).tolist()], dtype=np.int64)


class BloomFilter:
    def __init__(self, n_bits: int, n_hashes: int, seed: int = 3):
        if n_bits < 1 or n_hashes < 1:
            raise ValueError("bloom filter needs at least one bit and one hash")
        self.n_bits = n_bits
        self.n_hashes = n_hashes
        self.seeds = row_seeds(seed, n_hashes)
        self.bits = np.zeros(n_bits, dtype=bool)

    @classmethod
    def for_capacity(cls, expected: int, fp_rate: float = 0.01, seed: int = 3) -> "BloomFilter":
        expected = max(1, expected)
        bits = math.ceil(-expected * math.log(fp_rate) / math.log(2) ** 2)
        hashes = max(1, round(bits / expected * math.log(2)))
        return cls(bits, hashes, seed)

    @property
    def memory_bytes(self) -> int:
        return -(-self.n_bits // 8)

    def _positions(self, key: int) -> list[int]:
        return [mix64(key ^ s) % self.n_bits for s in self.seeds]

    def add(self, key: int) -> None:
        self.bits[self._positions(key)] = True

    def __contains__(self, key: int) -> bool:
        return bool(self.bits[self._positions(key)].all())

    def expected_fp_rate(self, inserted: int) -> float:
        return (1.0 - math.exp(-self.n_hashes * inserted / self.n_bits)) ** self.n_hashes


class FlowLidar:
    """Bloom filter flags first packets for the control plane; counts go to CM.

    Reconstructed from a one-line description: Bloom new-flow detection, a
    Count-Min for sizes and a reported-flow log. No control-plane decoding.
    """

    def __init__(
        self,
        memory_bytes: int,
        expected_flows: int = 64,
        fp_rate: float = 0.01,
        depth: int = 3,
        seed: int = 4,
    ):
        bloom = BloomFilter.for_capacity(expected_flows, fp_rate, seed)
        if bloom.memory_bytes > memory_bytes // 2:
            # never let detection starve the counters
            bits = max(8, (memory_bytes // 2) * 8)
            hashes = max(1, round(bits / max(1, expected_flows) * math.log(2)))
            bloom = BloomFilter(bits, hashes, seed)
        self.bloom = bloom
        self.cm = CountMinSketch.from_memory(memory_bytes - bloom.memory_bytes, depth, seed + 29)
        self.log: list[int] = []

    @property
    def memory_bytes(self) -> int:
        return self.bloom.memory_bytes + self.cm.memory_bytes

    def update(self, key: int, units: int = 1) -> None:
        if key not in self.bloom:
            self.log.append(key)
            self.bloom.add(key)
        self.cm.update(key, units)

    def query(self, key: int) -> int:
        return self.cm.query(key)

    def new_flows(self) -> list[int]:
        return list(self.log)

    def update_batch(self, keys, units=None) -> None:
        keys = np.asarray(keys)
        if len(keys) == 0:
            return
        # only a key's first packet can miss the filter
        _, first = np.unique(keys, return_index=True)
        for k in keys[np.sort(first)].tolist():
            if k not in self.bloom:
                self.log.append(k)
                self.bloom.add(k)
        self.cm.update_batch(keys, units)

    def query_batch(self, keys) -> np.ndarray:
        return self.cm.query_batch(keys)


SCHEMES = ("cm", "es", "flowlidar")


class PortedBaseline:
    """Four independent instances of one baseline, one per output port."""

    def __init__(self, factory: Callable[[int, int], object], budget_bytes: int, n_ports: int = 4):
        if budget_bytes < n_ports:
            raise ValueError("budget too small to split across ports")
        base, extra = divmod(budget_bytes, n_ports)
        self.budgets = [base + (1 if p < extra else 0) for p in range(n_ports)]
        self.instances = [factory(b, p) for p, b in enumerate(self.budgets)]
        self.budget_bytes = budget_bytes

    @classmethod
    def build(cls, scheme: str, budget_bytes: int, expected_flows: int = 64, **params) -> "PortedBaseline":
        if scheme == "cm":
            depth = params.get("cm_depth", 3)
            return cls(lambda b, p: CountMinSketch.from_memory(b, depth, seed=11 + p), budget_bytes)
        if scheme == "es":
            kw = {k[3:]: v for k, v in params.items() if k.startswith("es_")}
            return cls(lambda b, p: ElasticSketch(b, seed=23 + p, **kw), budget_bytes)
        if scheme == "flowlidar":
            depth = params.get("fl_depth", 3)
            fp = params.get("fl_fp_rate", 0.01)
            return cls(lambda b, p: FlowLidar(b, expected_flows, fp, depth, seed=37 + p), budget_bytes)
        raise ValueError(f"unknown baseline {scheme!r}; expected one of {SCHEMES}")

    @property
    def used_bytes(self) -> int:
        return sum(inst.memory_bytes for inst in self.instances)

    def update(self, key: int, port: int, units: int = 1) -> None:
        self.instances[port - 1].update(key, units)

    def query(self, key: int, port: int) -> int:
        return self.instances[port - 1].query(key)

    def update_batch(self, keys, ports, units=None) -> None:
        keys = np.asarray(keys)
        ports = np.asarray(ports)
        units = np.ones(len(keys), dtype=np.int64) if units is None else np.asarray(units)
        for p, inst in enumerate(self.instances, start=1):
            sel = ports == p
            if sel.any():
                inst.update_batch(keys[sel], units[sel])

    def query_batch(self, keys) -> np.ndarray:
        """(n, ports) estimates."""
        return np.stack([inst.query_batch(keys) for inst in self.instances], axis=1)
