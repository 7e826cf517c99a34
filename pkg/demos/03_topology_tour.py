"""A walk around the Iridium ISL grid at one instant.

Shows which inter-plane links the seam and the polar cutoff remove, and how
many equal-cost paths a long-haul flow can be sprayed across.

    python demos/03_topology_tour.py
"""

import numpy as np

from countingstars.flows import hop_distances, shortest_path_dag
from countingstars.topology import INTER, INTRA, IRIDIUM, IslPolicy, default_seam, snapshot_series

(snap,) = snapshot_series(IRIDIUM, IslPolicy(), 0.0, 1.0, 1.0)
(free,) = snapshot_series(IRIDIUM, IslPolicy(seam_enabled=False, latitude_rule_enabled=False), 0.0, 1.0, 1.0)

kinds = [k for *_, k in snap.edges]
print(f"{IRIDIUM.total} satellites, {kinds.count(INTRA)} intra-plane and {kinds.count(INTER)} inter-plane links")
print(f"seam between planes {default_seam(IRIDIUM)}")
print(f"links removed by seam and polar rules: {len(free.edges) - len(snap.edges)}")

deg = np.bincount([snap.degree(n) for n in snap.nodes], minlength=5)
print("degree histogram:", {d: int(c) for d, c in enumerate(deg) if c})

dist = hop_distances(snap)
src, dst = np.unravel_index(np.argmax(dist), dist.shape)
dag = shortest_path_dag(snap, int(src), int(dst))
print(f"\nlongest shortest path: {src} -> {dst}, {int(dist[src, dst])} hops")
print(f"its ECMP DAG has {len(dag)} edges over {len({u for e in dag for u in e})} satellites")
print("ports out of the source:", {p: v for p, v in snap.port_map[src].items() if (src, v) in dag})
