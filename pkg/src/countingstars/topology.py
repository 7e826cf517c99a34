"""Constellation geometry and the operational inter-satellite link topology.

Satellite ids are ``plane * sats_per_plane + slot``. Ports are fixed per role:
1 = fore (next in plane), 2 = aft, 3 = left plane (p - 1), 4 = right plane (p + 1).
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import PolicyInfeasible, TimestampMismatch
from .orbit import (
    EARTH,
    EarthModel,
    KeplerianElements,
    StateVector,
    state_at,
    visibility_matrix,
)

log = logging.getLogger(__name__)

PORT_FORE, PORT_AFT, PORT_LEFT, PORT_RIGHT = 1, 2, 3, 4
PORTS = (PORT_FORE, PORT_AFT, PORT_LEFT, PORT_RIGHT)
INTRA, INTER = "intra", "inter"


@dataclass(frozen=True)
class ConstellationSpec:
    planes: int
    sats_per_plane: int
    altitude_km: float
    inclination_deg: float
    phasing_offset: int = 0
    name: str = "walker"
    # 360 for Walker-delta, 180 for Walker-star (polar, Iridium-like)
    raan_spread_deg: float = 360.0

    def __post_init__(self):
        if self.planes < 1 or self.sats_per_plane < 1:
            raise ValueError("planes and sats_per_plane must be >= 1")
        if self.altitude_km <= 0:
            raise ValueError("altitude must be positive")
        if not 0 < self.raan_spread_deg <= 360:
            raise ValueError("raan_spread_deg must be in (0, 360]")

    @property
    def total(self) -> int:
        return self.planes * self.sats_per_plane

    def plane_of(self, sat: int) -> int:
        return sat // self.sats_per_plane

    def slot_of(self, sat: int) -> int:
        return sat % self.sats_per_plane

    def sat_id(self, plane: int, slot: int) -> int:
        return (plane % self.planes) * self.sats_per_plane + slot % self.sats_per_plane

    def plane_raan_deg(self) -> np.ndarray:
        return np.arange(self.planes) * self.raan_spread_deg / self.planes


IRIDIUM = ConstellationSpec(6, 11, 780.0, 86.4, 2, "iridium", 180.0)
STARLINK_SHELL1 = ConstellationSpec(72, 22, 550.0, 53.0, 39, "starlink", 360.0)
STARLINK_SMALL = ConstellationSpec(8, 22, 550.0, 53.0, 1, "starlink-small", 360.0)


def walker_elements(spec: ConstellationSpec, earth: EarthModel = EARTH) -> list[KeplerianElements]:
    """Circular Walker elements ordered by satellite id."""
    a = earth.earth_radius_km + spec.altitude_km
    inc = math.radians(spec.inclination_deg)
    out = []
    for p in range(spec.planes):
        raan = math.radians(p * spec.raan_spread_deg / spec.planes)
        for j in range(spec.sats_per_plane):
            m = 2 * math.pi * j / spec.sats_per_plane
            m += 2 * math.pi * spec.phasing_offset * p / spec.total
            out.append(KeplerianElements(a, 0.0, inc, raan, 0.0, m))
    return out


def order_elements_as_grid(
    elements: Sequence[KeplerianElements], spec: ConstellationSpec
) -> list[KeplerianElements]:
    """Sort arbitrary (e.g. TLE-loaded) elements into plane/slot order.

    Planes are formed by sorting on RAAN and chunking by ``sats_per_plane``;
    within a plane satellites are ordered by argument of latitude.
    """
    if len(elements) != spec.total:
        raise ValueError(f"expected {spec.total} satellites, got {len(elements)}")
    by_raan = sorted(elements, key=lambda e: (e.raan_rad, e.arg_perigee_rad + e.mean_anomaly_rad))
    out = []
    for p in range(spec.planes):
        chunk = by_raan[p * spec.sats_per_plane : (p + 1) * spec.sats_per_plane]
        chunk.sort(key=lambda e: (e.arg_perigee_rad + e.mean_anomaly_rad) % (2 * math.pi))
        out.extend(chunk)
    return out


@dataclass(frozen=True)
class IslPolicy:
    max_terminals: int = 4
    seam_enabled: bool = True
    high_latitude_cutoff_deg: float = 70.0
    latitude_rule_enabled: bool = True
    # explicit override; None derives the seam from the RAAN gaps
    seam_plane_pairs: tuple[tuple[int, int], ...] | None = None
    strict: bool = False

    def __post_init__(self):
        if self.max_terminals < 2:
            raise ValueError("max_terminals must be >= 2")
        if not 0 < self.high_latitude_cutoff_deg <= 90:
            raise ValueError("high_latitude_cutoff_deg must be in (0, 90]")

    def seams(self, spec: ConstellationSpec) -> frozenset[frozenset[int]]:
        if not self.seam_enabled or spec.planes < 2:
            return frozenset()
        if self.seam_plane_pairs is not None:
            return frozenset(frozenset(p) for p in self.seam_plane_pairs)
        return frozenset([frozenset(default_seam(spec))])


def default_seam(spec: ConstellationSpec) -> tuple[int, int]:
    """Adjacent plane pair with the widest RAAN gap; ties go to the wrap pair."""
    raan = spec.plane_raan_deg()
    gaps = [(raan[(p + 1) % spec.planes] - raan[p]) % 360.0 for p in range(spec.planes)]
    widest = max(gaps)
    candidates = [p for p, g in enumerate(gaps) if math.isclose(g, widest, abs_tol=1e-9)]
    p = spec.planes - 1 if spec.planes - 1 in candidates else candidates[0]
    return p, (p + 1) % spec.planes


@dataclass(frozen=True)
class TopologySnapshot:
    t_s: float
    n_nodes: int
    edges: frozenset  # of (u, v, kind) with u < v
    port_map: tuple = ()  # per node: {port: neighbour}
    positions_km: np.ndarray | None = field(default=None, compare=False, repr=False)
    dropped: tuple = field(default=(), compare=False)  # infeasible mandated links

    @property
    def nodes(self) -> range:
        return range(self.n_nodes)

    def edge_pairs(self) -> set[tuple[int, int]]:
        return {(u, v) for u, v, _ in self.edges}

    def neighbors(self) -> list[list[int]]:
        adj = [[] for _ in range(self.n_nodes)]
        for u, v, _ in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        for row in adj:
            row.sort()
        return adj

    def degree(self, node: int) -> int:
        return sum(1 for u, v, _ in self.edges if node in (u, v))

    def port_to(self, node: int, neighbor: int) -> int:
        for port, nb in self.port_map[node].items():
            if nb == neighbor:
                return port
        raise KeyError(f"node {node} has no port toward {neighbor}")

    def port_lookup(self) -> dict[tuple[int, int], int]:
        return {
            (u, nb): port for u, ports in enumerate(self.port_map) for port, nb in ports.items()
        }

    def adjacency_matrix(self) -> np.ndarray:
        mat = np.zeros((self.n_nodes, self.n_nodes), dtype=np.uint8)
        for u, v, _ in self.edges:
            mat[u, v] = mat[v, u] = 1
        return mat


def _check_common_time(states: Sequence[StateVector]) -> float:
    if not states:
        return 0.0
    t = states[0].t_s
    for s in states:
        if s.t_s != t:
            raise TimestampMismatch(f"states span t={t} and t={s.t_s}")
    return t


def visibility_graph(states: Sequence[StateVector], earth: EarthModel = EARTH) -> TopologySnapshot:
    """G_v(t): every pair of satellites with an unobstructed line of sight."""
    t = _check_common_time(states)
    n = len(states)
    if n == 0:
        return TopologySnapshot(t, 0, frozenset(), ())
    pos = np.array([s.position_km for s in states])
    vis = visibility_matrix(pos, earth)
    iu, ju = np.nonzero(np.triu(vis, 1))
    edges = frozenset((int(u), int(v), "potential") for u, v in zip(iu, ju))
    return TopologySnapshot(t, n, edges, tuple({} for _ in range(n)), pos)


def _latitude_deg(pos: np.ndarray) -> np.ndarray:
    return np.degrees(np.arcsin(pos[:, 2] / np.linalg.norm(pos, axis=1)))


def grid_candidates(spec: ConstellationSpec) -> list[tuple[int, int, int, int, str]]:
    """Mandated grid links as (u, port_at_u, v, port_at_v, kind), deduplicated."""
    P, S, F = spec.planes, spec.sats_per_plane, spec.phasing_offset
    # a delta shell closes on itself, shifting slots by F across the wrap
    wrap_shift = F if math.isclose(spec.raan_spread_deg, 360.0) else 0
    seen: set[frozenset[int]] = set()
    out = []

    def add(u, pu, v, pv, kind):
        key = frozenset((u, v))
        if u == v or key in seen:
            return
        seen.add(key)
        out.append((u, pu, v, pv, kind))

    for p in range(P):
        for j in range(S):
            u = spec.sat_id(p, j)
            if S > 1:
                add(u, PORT_FORE, spec.sat_id(p, j + 1), PORT_AFT, INTRA)
    for p in range(P):
        if P < 2:
            break
        for j in range(S):
            u = spec.sat_id(p, j)
            if p + 1 < P:
                v = spec.sat_id(p + 1, j)
            else:
                v = spec.sat_id(0, j + wrap_shift)
            add(u, PORT_RIGHT, v, PORT_LEFT, INTER)
    return out


def apply_isl_policy(
    gv: TopologySnapshot,
    spec: ConstellationSpec,
    policy: IslPolicy,
    states: Sequence[StateVector] | None = None,
) -> TopologySnapshot:
    """Prune the visibility graph down to the operational grid G_a(t)."""
    if gv.n_nodes != spec.total:
        raise ValueError(f"visibility graph has {gv.n_nodes} nodes, spec has {spec.total}")
    pos = gv.positions_km
    if states is not None:
        pos = np.array([s.position_km for s in states])
    lat = _latitude_deg(pos) if pos is not None and len(pos) else np.zeros(spec.total)
    visible = gv.edge_pairs()
    seams = policy.seams(spec)
    cutoff = policy.high_latitude_cutoff_deg

    degree = [0] * spec.total
    ports: list[dict[int, int]] = [{} for _ in range(spec.total)]
    edges = set()
    dropped = []
    for u, pu, v, pv, kind in grid_candidates(spec):
        if kind == INTER:
            planes = frozenset((spec.plane_of(u), spec.plane_of(v)))
            if planes in seams:
                continue
            if policy.latitude_rule_enabled and (abs(lat[u]) > cutoff or abs(lat[v]) > cutoff):
                continue
        a, b = min(u, v), max(u, v)
        if (a, b) not in visible:
            if policy.strict:
                raise PolicyInfeasible(f"grid link {u}-{v} fails line of sight at t={gv.t_s}")
            dropped.append((a, b))
            continue
        if degree[u] >= policy.max_terminals or degree[v] >= policy.max_terminals:
            continue
        if pu in ports[u] or pv in ports[v]:
            continue
        degree[u] += 1
        degree[v] += 1
        ports[u][pu] = v
        ports[v][pv] = u
        edges.add((a, b, kind))
    if dropped:
        log.debug("t=%s: %d mandated links failed visibility", gv.t_s, len(dropped))
    port_map = tuple(dict(sorted(p.items())) for p in ports)
    return TopologySnapshot(gv.t_s, spec.total, frozenset(edges), port_map, pos, tuple(dropped))


def constellation_states(
    elements: Sequence[KeplerianElements], t_s: float, earth: EarthModel = EARTH
) -> list[StateVector]:
    return [state_at(el, t_s, earth) for el in elements]


def snapshot_series(
    spec: ConstellationSpec,
    policy: IslPolicy,
    t0_s: float,
    horizon_s: float,
    step_s: float,
    elements: Sequence[KeplerianElements] | None = None,
    earth: EarthModel = EARTH,
) -> list[TopologySnapshot]:
    """One operational snapshot per step over ``[t0, t0 + horizon)``.

    ``elements`` (e.g. a TLE set already ordered with order_elements_as_grid)
    overrides the Walker geometry implied by ``spec``.
    """
    if not step_s > 0:
        raise ValueError("step_s must be positive")
    if horizon_s < step_s:
        raise ValueError("horizon_s must be at least step_s")
    if elements is None:
        elements = walker_elements(spec, earth)
    count = int(round(horizon_s / step_s))
    series = []
    for k in range(count):
        t = t0_s + k * step_s
        states = constellation_states(elements, t, earth)
        gv = visibility_graph(states, earth)
        series.append(apply_isl_policy(gv, spec, policy))
    return series


# ---------------------------------------------------------------------------
# export / import


def to_adjacency_text(snap: TopologySnapshot) -> str:
    """One line per node: ``id port:neighbor ...``."""
    lines = []
    for node in snap.nodes:
        pairs = " ".join(f"{p}:{nb}" for p, nb in sorted(snap.port_map[node].items()))
        lines.append(f"{node} {pairs}".rstrip())
    return "\n".join(lines) + "\n"


def from_adjacency_text(text: str, t_s: float = 0.0) -> TopologySnapshot:
    ports = []
    for line in text.strip().splitlines():
        fields = line.split()
        node = int(fields[0])
        if node != len(ports):
            raise ValueError(f"adjacency text out of order at node {node}")
        ports.append({int(p): int(nb) for p, nb in (f.split(":") for f in fields[1:])})
    edges = set()
    for u, pm in enumerate(ports):
        for port, v in pm.items():
            kind = INTRA if port in (PORT_FORE, PORT_AFT) else INTER
            edges.add((min(u, v), max(u, v), kind))
    return TopologySnapshot(t_s, len(ports), frozenset(edges), tuple(ports))


def write_adjacency_csv(series: Iterable[TopologySnapshot], fh) -> None:
    """Time-stamped adjacency matrix: ``t_s,node,n0..n{N-1}``."""
    writer = csv.writer(fh, lineterminator="\n")
    header_written = False
    for snap in series:
        if not header_written:
            writer.writerow(["t_s", "node"] + [f"n{i}" for i in snap.nodes])
            header_written = True
        mat = snap.adjacency_matrix()
        for node in snap.nodes:
            writer.writerow([repr(float(snap.t_s)), node] + mat[node].tolist())


def read_adjacency_csv(fh) -> list[TopologySnapshot]:
    """Load edge sets back from :func:`write_adjacency_csv` (ports are not kept)."""
    reader = csv.reader(fh)
    next(reader)
    rows: dict[float, list[list[int]]] = {}
    for row in reader:
        rows.setdefault(float(row[0]), []).append([int(x) for x in row[2:]])
    out = []
    for t, mat in rows.items():
        m = np.array(mat)
        iu, ju = np.nonzero(np.triu(m, 1))
        edges = frozenset((int(u), int(v), "link") for u, v in zip(iu, ju))
        out.append(TopologySnapshot(t, len(mat), edges, tuple({} for _ in mat)))
    return out


def adjacency_csv_text(series: Iterable[TopologySnapshot]) -> str:
    buf = io.StringIO()
    write_adjacency_csv(series, buf)
    return buf.getvalue()
