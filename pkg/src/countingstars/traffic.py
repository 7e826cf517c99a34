"""Diurnal, spatially uneven ground traffic and its satellite-level projection."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import NoAccessSatellite
from .flows import FlowKey
from .orbit import EARTH, EarthModel
from .sketch import MIN_PACKET_BYTES, PacketRecord

# Two-peak working-day/evening curve, local hours 0..23.
DEFAULT_PROFILE = (
    0.30, 0.22, 0.18, 0.15, 0.15, 0.20, 0.35, 0.55, 0.75, 0.90, 0.95, 0.92,
    0.88, 0.90, 0.93, 0.95, 0.95, 0.98, 1.00, 1.00, 0.95, 0.80, 0.60, 0.42,
)


@dataclass(frozen=True)
class GroundStation:
    id: int
    longitude_deg: float
    latitude_deg: float = 0.0

    def __post_init__(self):
        if not -180.0 <= self.longitude_deg < 180.0:
            raise ValueError(f"longitude {self.longitude_deg} outside [-180, 180)")
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise ValueError(f"latitude {self.latitude_deg} outside [-90, 90]")


@dataclass(frozen=True)
class TrafficParams:
    offerload: float
    isl_bandwidth_B: float
    n_ter: int
    diurnal_profile: tuple[float, ...] = DEFAULT_PROFILE
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.offerload <= 1.0:
            raise ValueError("offerload must be in [0, 1]")
        if self.isl_bandwidth_B < 0 or self.n_ter < 0:
            raise ValueError("bandwidth and station count must be non-negative")
        if len(self.diurnal_profile) != 24:
            raise ValueError("diurnal profile needs 24 hourly weights")
        if min(self.diurnal_profile) < 0 or sum(self.diurnal_profile) <= 0:
            raise ValueError("diurnal weights must be non-negative with a positive sum")
        object.__setattr__(self, "diurnal_profile", tuple(float(w) for w in self.diurnal_profile))


@dataclass
class TrafficMatrix:
    t_s: float
    entries: dict[tuple[int, int], float] = field(default_factory=dict)

    @property
    def mass(self) -> float:
        return sum(self.entries.values())


def total_demand(p: TrafficParams) -> float:
    """Network-wide offered traffic per second."""
    return p.offerload * p.isl_bandwidth_B * p.n_ter


def local_hour(t_s: float, longitude_deg: float) -> int:
    return (math.floor(t_s / 3600.0) + math.floor(longitude_deg / 15.0)) % 24


def hour_buckets(stations: Sequence[GroundStation], t_s: float) -> np.ndarray:
    counts = np.zeros(24, dtype=np.int64)
    for s in stations:
        counts[local_hour(t_s, s.longitude_deg)] += 1
    return counts


def _occupied_weight(p: TrafficParams, buckets: np.ndarray) -> float:
    # normalising over occupied hours keeps total output equal to D_t even
    # when some time zones have no stations
    return float(sum(w for w, n in zip(p.diurnal_profile, buckets) if n))


def station_demand(
    p: TrafficParams,
    station: GroundStation,
    t_s: float,
    stations: Sequence[GroundStation] | None = None,
) -> float:
    """Per-second output of one station: D_t * (w_hour / w_total) / n_hour."""
    stations = [station] if stations is None else stations
    buckets = hour_buckets(stations, t_s)
    hour = local_hour(t_s, station.longitude_deg)
    w_total = _occupied_weight(p, buckets)
    if w_total == 0 or buckets[hour] == 0:
        return 0.0
    return total_demand(p) * (p.diurnal_profile[hour] / w_total) / buckets[hour]


def pairwise_demand(
    p: TrafficParams,
    src: GroundStation,
    stations: Sequence[GroundStation],
    t_s: float,
    rng: np.random.Generator,
    src_total: float | None = None,
) -> dict[int, float]:
    """Split a station's output over all other stations with U(0.1, 1) weights.

    The row is renormalised so the station never emits more than its budget.
    """
    if src_total is None:
        src_total = station_demand(p, src, t_s, stations)
    dsts = [s.id for s in stations if s.id != src.id]
    if not dsts:
        return {}
    u = rng.uniform(0.1, 1.0, size=len(dsts))
    share = u / u.sum()
    return {d: float(src_total * w) for d, w in zip(dsts, share)}


def station_matrix(
    p: TrafficParams,
    stations: Sequence[GroundStation],
    t_s: float,
    rng: np.random.Generator,
    duration_s: float = 1.0,
) -> TrafficMatrix:
    """Ground-to-ground demand accumulated over ``duration_s`` starting at ``t_s``."""
    buckets = hour_buckets(stations, t_s)
    w_total = _occupied_weight(p, buckets)
    d_t = total_demand(p)
    tm = TrafficMatrix(t_s)
    for s in stations:
        hour = local_hour(t_s, s.longitude_deg)
        out = 0.0 if w_total == 0 else d_t * p.diurnal_profile[hour] / w_total / buckets[hour]
        for dst, units in pairwise_demand(p, s, stations, t_s, rng, out * duration_s).items():
            tm.entries[(s.id, dst)] = units
    return tm


# ---------------------------------------------------------------------------
# stations and access


# latitude bands (deg) with rough population weights: land-heavy north mid-latitudes
_LAT_BANDS = ((-55, -35, 0.06), (-35, -10, 0.16), (-10, 10, 0.14), (10, 25, 0.20), (25, 45, 0.30), (45, 60, 0.14))


def place_stations(n: int, rng: np.random.Generator, max_abs_lat: float = 60.0) -> list[GroundStation]:
    """Uneven random placement; the first 24 stations cover every time zone."""
    bands = [b for b in _LAT_BANDS if max(abs(b[0]), abs(b[1])) <= max_abs_lat]
    weights = np.array([b[2] for b in bands])
    weights = weights / weights.sum()
    out = []
    for i in range(n):
        if i < 24:
            lon = -180.0 + 15.0 * i + rng.uniform(0.0, 15.0)
        else:
            lon = rng.uniform(-180.0, 180.0)
        lon = min(lon, math.nextafter(180.0, 0.0))
        lo, hi, _ = bands[rng.choice(len(bands), p=weights)]
        out.append(GroundStation(i, float(lon), float(rng.uniform(lo, hi))))
    return out


def station_eci(station: GroundStation, t_s: float, earth: EarthModel = EARTH) -> np.ndarray:
    """Station position in ECI, Greenwich aligned with +x at t = 0."""
    lon = math.radians(station.longitude_deg) + earth.rotation_rad_s * t_s
    lat = math.radians(station.latitude_deg)
    r = earth.earth_radius_km
    return np.array([r * math.cos(lat) * math.cos(lon), r * math.cos(lat) * math.sin(lon), r * math.sin(lat)])


def access_map(
    stations: Sequence[GroundStation],
    positions_km: np.ndarray,
    t_s: float,
    min_elevation_deg: float = 0.0,
    earth: EarthModel = EARTH,
) -> dict[int, int]:
    """Station id -> satellite with the highest elevation above the threshold."""
    pos = np.asarray(positions_km)
    out = {}
    for s in stations:
        g = station_eci(s, t_s, earth)
        d = pos - g
        sin_el = (d @ g) / (np.linalg.norm(d, axis=1) * np.linalg.norm(g))
        best = int(np.argmax(sin_el))
        if math.degrees(math.asin(min(1.0, sin_el[best]))) < min_elevation_deg:
            raise NoAccessSatellite(f"station {s.id} sees no satellite at t={t_s}")
        out[s.id] = best
    return out


def to_satellite_matrix(
    tm: TrafficMatrix, access: Mapping[int, int]
) -> tuple[dict[FlowKey, float], float]:
    """Sum station-pair demand onto (access, exit) satellites.

    Returns the satellite-level matrix and the mass of pairs served by a
    single satellite (which never crosses an ISL).
    """
    sat: dict[FlowKey, float] = {}
    local = 0.0
    for (i, j), units in tm.entries.items():
        if i not in access or j not in access:
            raise NoAccessSatellite(f"station {i if i not in access else j} has no access satellite")
        a, b = access[i], access[j]
        if a == b:
            local += units
            continue
        key = FlowKey(a, b)
        sat[key] = sat.get(key, 0.0) + units
    return sat, local


# ---------------------------------------------------------------------------
# packets


class Packetizer:
    """Turns fractional per-flow demand into whole 64-byte packets.

    Each flow keeps a carry; an epoch emits ``floor(carry + demand)`` packets.
    """

    EPS = 1e-9

    def __init__(self):
        self.carry: dict[FlowKey, float] = {}

    def packetize(
        self,
        demand: Mapping[FlowKey, float],
        epoch: int,
        rng: np.random.Generator | None = None,
        t_s: float = 0.0,
    ) -> list[PacketRecord]:
        counts = self.counts(demand)
        keys = sorted(counts)
        flat = [k for k in keys for _ in range(counts[k])]
        if rng is not None and flat:
            order = rng.permutation(len(flat))
            flat = [flat[i] for i in order]
        return [PacketRecord(k.src, k.dst, MIN_PACKET_BYTES, 0, t_s) for k in flat]

    def counts(self, demand: Mapping[FlowKey, float]) -> dict[FlowKey, int]:
        out = {}
        for key in sorted(set(demand) | set(self.carry)):
            units = demand.get(key, 0.0)
            if units < 0:
                raise ValueError(f"negative demand for {key}")
            acc = self.carry.get(key, 0.0) + units
            whole = math.floor(acc + self.EPS)
            self.carry[key] = max(0.0, acc - whole)
            if whole:
                out[key] = whole
        return out


def packetize(demand, epoch: int = 0, rng=None, carry: Packetizer | None = None):
    return (carry or Packetizer()).packetize(demand, epoch, rng)


def write_traffic_csv(rows, fh) -> None:
    """``t,src_sat,dst_sat,units`` for a sequence of (t, {FlowKey: units})."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "src_sat", "dst_sat", "units"])
    for t, matrix in rows:
        for key in sorted(matrix):
            w.writerow([t, key.src, key.dst, repr(float(matrix[key]))])
