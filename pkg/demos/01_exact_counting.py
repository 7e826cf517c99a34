"""Per-port flow counts on one satellite, read back from a CountingStars node.

With the full perfect-modulus table installed every flow gets its own 64-bit
word, so the readback matches the simulator's ground truth exactly. Squeeze
the same node into a few hundred bytes and flows start sharing words.

    python demos/01_exact_counting.py
"""

from collections import defaultdict

from countingstars import from_dict, measure, simulate

sc = from_dict({
    "name": "demo",
    "constellation": {"preset": "iridium"},
    "traffic": {"offerload": 0.5, "isl_bandwidth": 8, "n_ter": 40},
    "epoch_s": 1,
    "horizon_s": 10,
    "seed_period_s": 10,
    "memory_bytes": 4096,
    "rng_seed": 11,
})
sim = simulate(sc)
period = sim.periods[0]
print(f"{period.packets} packets over {sc.horizon_s}s, {len(period.truth)} (satellite, flow, port) keys")

# busiest satellite
load = defaultdict(int)
for (sat, *_), v in period.truth.items():
    load[sat] += v
sat = max(load, key=load.get)
seed = period.seeds[sat]
print(f"satellite {sat}: {seed.flow_count} predicted flows, modulus h = {seed.modulus}")

for memory in (None, 256):
    (res,) = measure(sim, "cs", memory)
    label = "full table" if memory is None else f"{memory} bytes"
    print(f"\n{label}: ARE {res.metrics.are:.4f}, WMRE {res.metrics.wmre:.4f}")
    print("  src -> dst  port   true  estimate")
    keys = sorted(k for k in period.truth if k[0] == sat)[:8]
    for k in keys:
        _, src, dst, port = k
        print(f"  {src:>3} -> {dst:<3}  {port:>4}  {period.truth[k]:>5}  {res.estimates.get(k, 0):>8}")
