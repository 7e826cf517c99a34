"""Discrete-time harness: topology, traffic, seeds, forwarding and readback.

A run is split in two stages so memory sweeps can reuse one traffic trace:

* :func:`simulate` builds snapshots, traffic, flow predictions and seeds and
  forwards every packet, producing per-period hop logs and ground truth;
* :func:`measure` replays those hop logs into one scheme at one memory budget
  and returns per-period estimates and metrics.

:func:`run` chains both for the scenario's configured schemes.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .baselines import PortedBaseline
from .errors import InvariantBreach, Unreachable
from .flows import UNREACHABLE, FlowKey, FlowSet, hop_distances, plan_flows
from .metrics import evaluate
from .orbit import read_tle_file
from .scenario import Scenario
from .seeds import SeedTable, build_seed_table, build_seed_tables, cantor_pair_array
from .sketch import N_PORTS, CsNode
from .topology import (
    TopologySnapshot,
    apply_isl_policy,
    constellation_states,
    order_elements_as_grid,
    visibility_graph,
    walker_elements,
)
from .traffic import (
    GroundStation,
    Packetizer,
    access_map,
    place_stations,
    station_matrix,
    to_satellite_matrix,
)

log = logging.getLogger(__name__)

# (sat, src, dst, port)
TruthKey = tuple[int, int, int, int]


@dataclass
class InFlight:
    src: int
    dst: int
    node: int
    pid: int


@dataclass
class ForwardStats:
    delivered: int = 0
    dropped: int = 0
    rerouted: int = 0


class Forwarder:
    """ECMP forwarding with a round-robin cursor per (node, flow).

    Cursors persist across snapshots so a flow keeps rotating over its
    successors from where it left off.
    """

    def __init__(self):
        self.cursors: dict[tuple[int, int, int], int] = {}
        self._snap = None

    def bind(self, g: TopologySnapshot, dist: np.ndarray | None = None) -> None:
        self._snap = g
        self.dist = hop_distances(g) if dist is None else dist
        self.adj = g.neighbors()
        self.ports = g.port_lookup()
        self._succ: dict[tuple[int, int], list[int]] = {}

    def successors(self, node: int, dst: int) -> list[int]:
        key = (node, dst)
        s = self._succ.get(key)
        if s is None:
            want = self.dist[node, dst] - 1
            s = [x for x in self.adj[node] if self.dist[x, dst] == want]
            self._succ[key] = s
        return s

    def step(self, node: int, src: int, dst: int) -> tuple[int, int]:
        """Next hop and output port for one packet of flow (src, dst) at ``node``."""
        if self.dist[node, dst] == UNREACHABLE:
            raise Unreachable(f"{dst} unreachable from {node}")
        succ = self.successors(node, dst)
        key = (node, src, dst)
        k = self.cursors.get(key, 0)
        self.cursors[key] = k + 1
        nxt = succ[k % len(succ)]
        return nxt, self.ports[(node, nxt)]


def forward_packet(
    g: TopologySnapshot,
    src: int,
    dst: int,
    cursors: dict | None = None,
    fwd: Forwarder | None = None,
) -> list[tuple[int, int]]:
    """Route one packet; returns the (node, out_port) hops it took.

    ``cursors`` (the per-(node, flow) round-robin state) is updated in place.
    """
    if src == dst:
        raise ValueError("source and destination satellites must differ")
    if fwd is None:
        fwd = Forwarder()
        fwd.bind(g)
        if cursors is not None:
            fwd.cursors = cursors
    hops = []
    node = src
    while node != dst:
        nxt, port = fwd.step(node, src, dst)
        hops.append((node, port))
        node = nxt
    return hops


def reroute_on_change(
    prev: TopologySnapshot,
    nxt: TopologySnapshot,
    in_flight: Sequence[InFlight],
    dist: np.ndarray | None = None,
) -> tuple[list[InFlight], list[InFlight]]:
    """Carry in-flight packets onto a new snapshot.

    Packets stay at their current node and are forwarded on ``nxt`` from
    there. Returns (kept, dropped): dropped packets have no route left.
    """
    if dist is None:
        dist = hop_distances(nxt)
    kept, dropped = [], []
    for p in in_flight:
        (kept if dist[p.node, p.dst] != UNREACHABLE else dropped).append(p)
    return kept, dropped


# ---------------------------------------------------------------------------
# simulation stage


@dataclass
class HopLog:
    """Per-satellite transmissions in arrival order."""

    sat: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    port: np.ndarray

    @classmethod
    def from_lists(cls, sat, src, dst, port) -> "HopLog":
        return cls(*(np.asarray(a, dtype=np.int64) for a in (sat, src, dst, port)))

    def __len__(self):
        return len(self.sat)

    def by_satellite(self) -> dict[int, np.ndarray]:
        order = np.argsort(self.sat, kind="stable")
        sats, starts = np.unique(self.sat[order], return_index=True)
        bounds = list(starts[1:]) + [len(order)]
        return {int(s): order[a:b] for s, a, b in zip(sats, starts, bounds)}


@dataclass
class GroundTruth:
    """Exact units forwarded per (sat, src, dst, port) for each period."""

    periods: dict[int, dict[TruthKey, int]] = field(default_factory=dict)

    def add(self, period: int, key: TruthKey, units: int = 1) -> None:
        if units < 0:
            raise InvariantBreach("negative truth update")
        table = self.periods.setdefault(period, {})
        table[key] = table.get(key, 0) + units

    def of(self, period: int) -> dict[TruthKey, int]:
        return self.periods.get(period, {})


@dataclass
class PeriodTraffic:
    """Everything the measurement stage needs for one seed period."""

    period: int
    t_s: float
    snapshots: list[TopologySnapshot]
    flow_sets: list[FlowSet]
    seeds: list[SeedTable]
    hops: HopLog
    truth: dict[TruthKey, int]
    satellite_demand: list[dict[FlowKey, float]]
    packets: int = 0
    delivered: int = 0
    dropped: int = 0
    rerouted: int = 0
    local_mass: float = 0.0
    prediction_misses: int = 0
    flow_packets: dict = field(default_factory=dict)


@dataclass
class Simulation:
    scenario: Scenario
    stations: list[GroundStation]
    periods: list[PeriodTraffic]

    @property
    def n_sats(self) -> int:
        return self.scenario.constellation.total


def scenario_elements(sc: Scenario):
    if sc.tle_file:
        sats = read_tle_file(sc.tle_file)
        return order_elements_as_grid(sats, sc.constellation)
    return walker_elements(sc.constellation)


def scenario_stations(sc: Scenario, rng: np.random.Generator) -> list[GroundStation]:
    if sc.stations is not None:
        return [GroundStation(i, lon, lat) for i, (lon, lat) in enumerate(sc.stations)]
    return place_stations(sc.traffic.n_ter, rng)


def _snapshot(sc: Scenario, elements, t: float) -> TopologySnapshot:
    states = constellation_states(elements, t)
    return apply_isl_policy(visibility_graph(states), sc.constellation, sc.isl_policy, states)


def _dag_nodes(dist: np.ndarray, a: int, b: int) -> np.ndarray:
    total = dist[a, b]
    ok = (dist[a, :] + dist[:, b] == total) & (dist[a, :] >= 0) & (dist[:, b] >= 0)
    return np.flatnonzero(ok)


def simulate(sc: Scenario, progress=None) -> Simulation:
    """Stage one: forward the scenario's traffic and record ground truth."""
    root = np.random.SeedSequence(sc.rng_seed)
    rng_stations, rng_demand, rng_order = (np.random.default_rng(s) for s in root.spawn(3))
    stations = scenario_stations(sc, rng_stations)
    elements = scenario_elements(sc)
    n = sc.constellation.total
    packetizer = Packetizer()
    fwd = Forwarder()
    in_flight: list[InFlight] = []
    pid = 0
    prev_snap = None
    out = []
    for e in range(sc.n_periods):
        t_period = sc.t0_s + e * sc.period_s
        slices = []
        for k in range(sc.slices_per_period):
            t = t_period + k * sc.epoch_s
            snap = _snapshot(sc, elements, t)
            dist = hop_distances(snap)
            access = access_map(stations, snap.positions_km, t, sc.min_elevation_deg)
            tm = station_matrix(sc.traffic, stations, t, rng_demand, sc.epoch_s)
            demand, local = to_satellite_matrix(tm, access)
            counts = packetizer.counts(demand)
            slices.append((t, snap, dist, demand, local, counts))

        # ground side: predict each satellite's flows for the whole period
        members: list[set[FlowKey]] = [set() for _ in range(n)]
        for t, snap, dist, demand, local, counts in slices:
            if sc.prediction == "traffic":
                pairs = list(counts)
            elif sc.prediction == "demand":
                pairs = [k for k, v in demand.items() if v > 0]
            else:
                pairs = None
            plan = plan_flows(snap, e, pairs, dist)
            for fs in plan.flow_sets:
                members[fs.sat_id].update(fs.flows)
        if sc.max_hops_per_epoch is not None and in_flight:
            dist0 = slices[0][2]
            for p in in_flight:
                if dist0[p.node, p.dst] != UNREACHABLE:
                    for w in _dag_nodes(dist0, p.node, p.dst):
                        members[int(w)].add(FlowKey(p.src, p.dst))
        flow_sets = [FlowSet(s, e, tuple(sorted(members[s], key=lambda f: f.flow_id))) for s in range(n)]
        seeds = build_seed_tables(flow_sets, sc.seed_search_factor)
        predicted = [set(m) for m in members]

        # space side: forward packets hop by hop
        sat_l, src_l, dst_l, port_l = [], [], [], []
        truth: dict[TruthKey, int] = {}
        stats = ForwardStats()
        misses = 0
        n_packets = 0
        flow_packets: dict[FlowKey, int] = defaultdict(int)
        for t, snap, dist, demand, local, counts in slices:
            fwd.bind(snap, dist)
            if prev_snap is not None and in_flight:
                before = len(in_flight)
                in_flight, dropped = reroute_on_change(prev_snap, snap, in_flight, dist)
                stats.dropped += len(dropped)
                stats.rerouted += before - len(dropped)
            keys = sorted(counts)
            flat = np.repeat(np.arange(len(keys)), [counts[k] for k in keys])
            flat = flat[rng_order.permutation(len(flat))]
            queue = list(in_flight)
            for i in flat.tolist():
                key = keys[i]
                queue.append(InFlight(key.src, key.dst, key.src, pid))
                pid += 1
            n_packets += len(flat)
            for key in keys:
                flow_packets[key] += counts[key]
            in_flight = []
            budget = sc.max_hops_per_epoch
            for p in queue:
                if dist[p.node, p.dst] == UNREACHABLE:
                    stats.dropped += 1
                    continue
                node, steps = p.node, 0
                while node != p.dst:
                    if budget is not None and steps >= budget:
                        break
                    nxt, port = fwd.step(node, p.src, p.dst)
                    sat_l.append(node)
                    src_l.append(p.src)
                    dst_l.append(p.dst)
                    port_l.append(port)
                    tk = (node, p.src, p.dst, port)
                    truth[tk] = truth.get(tk, 0) + 1
                    if FlowKey(p.src, p.dst) not in predicted[node]:
                        misses += 1
                    node = nxt
                    steps += 1
                if node == p.dst:
                    stats.delivered += 1
                else:
                    p.node = node
                    in_flight.append(p)
            prev_snap = snap
        out.append(
            PeriodTraffic(
                period=e,
                t_s=t_period,
                snapshots=[s[1] for s in slices],
                flow_sets=flow_sets,
                seeds=seeds,
                hops=HopLog.from_lists(sat_l, src_l, dst_l, port_l),
                truth=truth,
                satellite_demand=[s[3] for s in slices],
                packets=n_packets,
                delivered=stats.delivered,
                dropped=stats.dropped,
                rerouted=stats.rerouted,
                local_mass=sum(s[4] for s in slices),
                prediction_misses=misses,
                flow_packets=dict(flow_packets),
            )
        )
        if progress:
            progress(e)
    return Simulation(sc, stations, out)


# ---------------------------------------------------------------------------
# measurement stage


@dataclass
class SchemeResult:
    """One scheme's view of one period."""

    scheme: str
    period: int
    estimates: dict[TruthKey, int]
    saturations: int
    memory_bytes: int
    metrics: object
    readbacks: list = field(default_factory=list, repr=False)
    lost_readbacks: int = 0


def _flow_arrays(fs: FlowSet) -> tuple[np.ndarray, np.ndarray]:
    src = np.fromiter((f.src for f in fs.flows), dtype=np.int64, count=len(fs.flows))
    dst = np.fromiter((f.dst for f in fs.flows), dtype=np.int64, count=len(fs.flows))
    return src, dst


def _collect(sat: int, src: np.ndarray, dst: np.ndarray, est: np.ndarray, out: dict) -> None:
    rows, cols = np.nonzero(est)
    for r, c in zip(rows.tolist(), cols.tolist()):
        out[(sat, int(src[r]), int(dst[r]), c + 1)] = int(est[r, c])


def _cs_periods(sim: Simulation, memory: int | None):
    sc = sim.scenario
    nodes = [CsNode.with_memory(s, memory, sc.parser_lanes) for s in range(sim.n_sats)]
    pending = None
    for pt in sim.periods + [None]:
        if pt is None:
            epoch = sim.periods[-1].period + 1 if sim.periods else 0
            seeds = [build_seed_table(s, epoch, ()) for s in range(sim.n_sats)]
        else:
            seeds = pt.seeds
        readbacks = [node.install_seed(seed) for node, seed in zip(nodes, seeds)]
        if pending is not None:
            prev_pt, sats = pending
            yield prev_pt, readbacks, sats
        if pt is None:
            break
        saturations = 0
        for s, idx in pt.hops.by_satellite().items():
            h = pt.hops
            saturations += nodes[s].update_batch(h.src[idx], h.dst[idx], h.port[idx])
        pending = (pt, saturations)


def measure(sim: Simulation, scheme: str, memory: int | None, keep_readbacks: bool = False) -> list[SchemeResult]:
    """Stage two: replay the hop logs into one scheme at one per-satellite budget.

    ``memory=None`` gives CS a counter per seeded slot (no cap).
    """
    sc = sim.scenario
    results = []
    if scheme == "cs":
        # readbacks go out at period end and again when the next seed lands;
        # the ground loses a period only if both copies are lost
        loss_rng = np.random.default_rng(np.random.SeedSequence(sc.rng_seed).spawn(4)[3])
        for pt, readbacks, saturations in _cs_periods(sim, memory):
            est: dict[TruthKey, int] = {}
            used = 0
            lost = 0
            for rb, fs in zip(readbacks, pt.flow_sets):
                if rb is None or rb.epoch != pt.period:
                    raise InvariantBreach(f"readback for satellite {fs.sat_id} is not from period {pt.period}")
                used += len(rb.counters) * 8
                if sc.control_loss_rate and (loss_rng.random(2) < sc.control_loss_rate).all():
                    lost += 1
                    continue
                if not len(fs):
                    continue
                src, dst = _flow_arrays(fs)
                t = cantor_pair_array(src, dst)
                slot = ((t % np.uint64(rb.modulus)) % np.uint64(len(rb.counters))).astype(np.int64)
                words = rb.counters[slot]
                sub = ((words[:, None] >> (np.arange(N_PORTS, dtype=np.uint64) * np.uint64(16))) & np.uint64(0xFFFF)).astype(np.int64)
                _collect(fs.sat_id, src, dst, sub, est)
            res = _result(sc, "cs", pt, est, saturations, memory, used // max(1, sim.n_sats), readbacks if keep_readbacks else [])
            res.lost_readbacks = lost
            results.append(res)
        return results

    for pt in sim.periods:
        by_sat = pt.hops.by_satellite()
        est = {}
        for fs in pt.flow_sets:
            s = fs.sat_id
            if not len(fs) and s not in by_sat:
                continue
            sketch = PortedBaseline.build(scheme, memory, max(1, len(fs)), **sc.baselines)
            idx = by_sat.get(s)
            if idx is not None:
                h = pt.hops
                sketch.update_batch(cantor_pair_array(h.src[idx], h.dst[idx]), h.port[idx])
            if len(fs):
                src, dst = _flow_arrays(fs)
                _collect(s, src, dst, sketch.query_batch(cantor_pair_array(src, dst)), est)
        results.append(_result(sc, scheme, pt, est, 0, memory, memory, []))
    return results


def _result(sc, scheme, pt, est, saturations, memory, used, readbacks) -> SchemeResult:
    m = evaluate(pt.truth, est, sc.re_aggregate)
    return SchemeResult(scheme, pt.period, est, saturations, used if memory is None else memory, m, readbacks)


# ---------------------------------------------------------------------------
# full run


@dataclass
class EpochReport:
    epoch: int
    t_s: float
    results: dict[str, SchemeResult]
    prediction_misses: int
    packets: int
    dropped: int

    def rows(self, sc: Scenario) -> list[dict]:
        out = []
        for scheme in sc.schemes:
            r = self.results.get(scheme)
            if r is None:
                continue
            out.append(report_row(sc, r, self.prediction_misses))
        return out


def report_row(sc: Scenario, r: SchemeResult, prediction_misses: int) -> dict:
    m = r.metrics
    return {
        "scenario": sc.name,
        "scheme": r.scheme,
        "load": sc.load,
        "memory_bytes": r.memory_bytes,
        "epoch": r.period,
        "are": m.are,
        "wmre": m.wmre,
        "re": m.re,
        "saturations": r.saturations,
        "false_positives": m.false_positives,
        "prediction_misses": prediction_misses,
    }


def run(sc: Scenario, sim: Simulation | None = None, keep_readbacks: bool = False) -> list[EpochReport]:
    """Simulate and measure every configured scheme."""
    sim = simulate(sc) if sim is None else sim
    per_scheme = {s: measure(sim, s, sc.memory_bytes.get(s), keep_readbacks) for s in sc.schemes}
    reports = []
    for i, pt in enumerate(sim.periods):
        reports.append(
            EpochReport(
                pt.period,
                pt.t_s,
                {s: res[i] for s, res in per_scheme.items()},
                pt.prediction_misses,
                pt.packets,
                pt.dropped,
            )
        )
    return reports


def report_rows(sc: Scenario, reports: Iterable[EpochReport]) -> list[dict]:
    return [row for r in reports for row in r.rows(sc)]


def conservation_check(sim: Simulation) -> None:
    """Per-flow truth volume equals delivered packets times path length (no in-flight mode)."""
    for pt in sim.periods:
        if pt.dropped or sim.scenario.max_hops_per_epoch is not None or len(pt.snapshots) != 1:
            continue
        dist = hop_distances(pt.snapshots[0])
        vol: dict[tuple[int, int], int] = defaultdict(int)
        for (_, a, b, _), u in pt.truth.items():
            vol[(a, b)] += u
        for key, pkts in pt.flow_packets.items():
            want = pkts * int(dist[key])
            if vol.get(tuple(key), 0) != want:
                raise InvariantBreach(f"flow {tuple(key)}: {vol.get(tuple(key), 0)} hop units, expected {want}")
