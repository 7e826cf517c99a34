"""Per-satellite flow sets from equal-cost (minimum-hop) routing DAGs."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import Unreachable
from .seeds import cantor_pair
from .topology import TopologySnapshot

UNREACHABLE = -1


class FlowKey(NamedTuple):
    src: int
    dst: int

    @property
    def flow_id(self) -> int:
        return cantor_pair(self.src, self.dst)


@dataclass(frozen=True)
class FlowSet:
    sat_id: int
    epoch: int
    flows: tuple[FlowKey, ...] = ()

    def flow_ids(self) -> list[int]:
        return [f.flow_id for f in self.flows]

    def __len__(self):
        return len(self.flows)

    def __contains__(self, flow):
        return flow in set(self.flows)


def hop_distances(g: TopologySnapshot) -> np.ndarray:
    """All-pairs hop counts (int64, UNREACHABLE where disconnected)."""
    n = g.n_nodes
    if n == 0:
        return np.zeros((0, 0), dtype=np.int64)
    pairs = g.edge_pairs()
    if not pairs:
        d = np.full((n, n), UNREACHABLE, dtype=np.int64)
        np.fill_diagonal(d, 0)
        return d
    u, v = np.array(sorted(pairs)).T
    adj = csr_matrix((np.ones(len(u)), (u, v)), shape=(n, n))
    dist = shortest_path(adj, method="D", directed=False, unweighted=True)
    out = np.where(np.isinf(dist), UNREACHABLE, dist).astype(np.int64)
    return out


def bfs_distances(adj: Sequence[Sequence[int]], src: int) -> list[int]:
    dist = [UNREACHABLE] * len(adj)
    dist[src] = 0
    queue = deque([src])
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if dist[y] == UNREACHABLE:
                dist[y] = dist[x] + 1
                queue.append(y)
    return dist


def shortest_path_dag(g: TopologySnapshot, src: int, dst: int) -> tuple[tuple[int, int], ...]:
    """Union of all minimum-hop src->dst paths as directed edges, sorted."""
    adj = g.neighbors()
    from_src = bfs_distances(adj, src)
    if from_src[dst] == UNREACHABLE:
        raise Unreachable(f"{dst} unreachable from {src} at t={g.t_s}")
    to_dst = bfs_distances(adj, dst)
    total = from_src[dst]
    edges = []
    for a in range(g.n_nodes):
        if from_src[a] == UNREACHABLE or to_dst[a] == UNREACHABLE:
            continue
        for b in adj[a]:
            if from_src[a] + 1 + to_dst[b] == total and to_dst[b] != UNREACHABLE:
                edges.append((a, b))
    return tuple(sorted(edges))


def next_hops(dist: np.ndarray, adj: Sequence[Sequence[int]], node: int, dst: int) -> list[int]:
    """ECMP successors of ``node`` toward ``dst`` in ascending id order."""
    want = dist[node, dst] - 1
    return [x for x in adj[node] if dist[x, dst] == want]


@dataclass
class FlowPlan:
    epoch: int
    flow_sets: list[FlowSet]
    distances: np.ndarray = field(repr=False)
    unreachable: list[FlowKey] = field(default_factory=list)

    @property
    def unreachable_count(self) -> int:
        return len(self.unreachable)


def _all_ordered_pairs(n: int) -> np.ndarray:
    u, v = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    mask = u != v
    return np.stack([u[mask], v[mask]], axis=1)


def plan_flows(
    g: TopologySnapshot,
    epoch: int = 0,
    pairs: Iterable[tuple[int, int]] | None = None,
    dist: np.ndarray | None = None,
    chunk: int = 4096,
) -> FlowPlan:
    """Assign every SD pair to each satellite on its ECMP DAG (endpoints included).

    ``pairs`` restricts the SD universe (default: all ordered pairs).
    """
    n = g.n_nodes
    if dist is None:
        dist = hop_distances(g)
    if pairs is None:
        sd = _all_ordered_pairs(n)
    else:
        sd = np.array(sorted({(int(a), int(b)) for a, b in pairs if a != b}), dtype=np.int64)
        sd = sd.reshape(-1, 2)
    members: list[list[FlowKey]] = [[] for _ in range(n)]
    unreachable = []
    if len(sd):
        total = dist[sd[:, 0], sd[:, 1]]
        bad = total == UNREACHABLE
        unreachable = [FlowKey(int(a), int(b)) for a, b in sd[bad]]
        sd = sd[~bad]
        total = total[~bad]
        reach = dist != UNREACHABLE
        for start in range(0, len(sd), chunk):
            s = sd[start : start + chunk, 0]
            d = sd[start : start + chunk, 1]
            via = dist[s, :] + dist[:, d].T
            ok = (via == total[start : start + chunk, None]) & reach[s, :] & reach[:, d].T
            rows, nodes = np.nonzero(ok)
            for r, k in zip(rows.tolist(), nodes.tolist()):
                members[k].append(FlowKey(int(s[r]), int(d[r])))
    flow_sets = [
        FlowSet(k, epoch, tuple(sorted(set(fl), key=lambda f: f.flow_id)))
        for k, fl in enumerate(members)
    ]
    return FlowPlan(epoch, flow_sets, dist, unreachable)


def flow_sets(g: TopologySnapshot, epoch: int = 0, pairs=None) -> list[FlowSet]:
    return plan_flows(g, epoch, pairs).flow_sets


def write_flow_sets_csv(flow_sets: Iterable[FlowSet], fh) -> None:
    """Audit dump: ``epoch,sat_id,src,dst,flow_id``."""
    fh.write("epoch,sat_id,src,dst,flow_id\n")
    for fs in flow_sets:
        for f in fs.flows:
            fh.write(f"{fs.epoch},{fs.sat_id},{f.src},{f.dst},{f.flow_id}\n")
