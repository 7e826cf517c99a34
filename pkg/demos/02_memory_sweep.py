"""How each sketch's error falls as its per-satellite memory budget grows.

One Iridium simulation is replayed through every scheme at several budgets;
the hop log is shared, so every scheme sees exactly the same packets.

    python demos/02_memory_sweep.py [load]
"""

import sys

from countingstars import load_scenario, measure, reference_config, simulate

load = float(sys.argv[1]) if len(sys.argv) > 1 else 0.5
sc = load_scenario(reference_config("iridium-0.1")).with_overrides(offerload=load, seed_period_s=100)
sim = simulate(sc)
p = sim.periods[0]
print(f"load {load}: {p.packets} packets, {len(p.truth)} keys, one 100 s measurement period\n")

schemes = ("cs", "es", "flowlidar", "cm")
print("memory  " + "".join(f"{s:>11}" for s in schemes))
for kb in (1, 2, 4, 8, 16, 32):
    row = [measure(sim, s, kb * 1024)[0].metrics.are for s in schemes]
    print(f"{kb:>4} KB " + "".join(f"{a:>11.4f}" for a in row))

(exact,) = measure(sim, "cs", None)
print(f"\ncs with its full table ({exact.memory_bytes} bytes per satellite on average): ARE {exact.metrics.are}")
