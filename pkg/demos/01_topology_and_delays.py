"""
Overlay over a hidden transit network: topology, traffic, delays
================================================================

Builds the canonical testbed instance, walks through how demand and
split ratios turn into per-link load, and cross-checks the queueing
formula against the packet-level event simulator on one sample.
"""

import numpy as np

from kdn import (
    DEFAULTS,
    gen_policy,
    gen_topology,
    gen_traffic,
    link_loads,
    shortest_path,
    simulate_analytic,
    simulate_des,
)

# The testbed ships one canonical instance: 12 overlay nodes that we
# control, 19 transit nodes we cannot see into, 72 bidirectional
# connections. Everything downstream (stores, models) is bound to its
# digest so mixing instances fails loudly.
topo = gen_topology(DEFAULTS.topo_seed)
print(f"topology: {len(topo.overlay_nodes)} overlay + "
      f"{len(topo.underlay_nodes)} underlay nodes, "
      f"{len(topo.links)} directed links")
print(f"digest: {topo.digest()[:16]}...")

# Each overlay node reaches the transit network through 1-3 attachment
# links. The split policy is the only knob we own.
for node in topo.overlay_nodes[:4]:
    dsts = [l.dst for l in topo.attachments[node]]
    print(f"  {node} attaches to {', '.join(dsts)}")

# Routing past the attachment is fixed shortest-path, ties broken by
# node-id order so results never depend on iteration order.
src, dst = topo.pairs[0]
attach = topo.attachments[src][0]
tail = shortest_path(topo, attach.dst, dst)
hops = [attach.link_id] + [l.link_id for l in tail]
print(f"\none route {src} -> {dst}: {' / '.join(hops)}")

# Draw a random demand matrix and split policy, then compose per-link
# offered load. Every link is an M/M/1 queue: mean time through it is
# propagation + 1/(capacity - load).
tm = gen_traffic(0, topo)
pol = gen_policy(0, topo)
report = link_loads(topo, tm, pol)
print(f"\ndemand: {tm.values().sum():.0f} pps total over {len(topo.pairs)} pairs")
print(f"utilization: median {np.median(report.utilization):.3f}, "
      f"max {report.utilization.max():.3f}")

delays = simulate_analytic(topo, tm, pol)
print(f"mean path delay {delays.mean()*1e3:.3f} ms, "
      f"max {delays.max()*1e3:.3f} ms")

# The analytic numbers are not a hand-wave: an independent event-driven
# simulation of the same sample (Poisson arrivals, exponential service,
# FIFO links) lands on the same per-pair means.
res = simulate_des(topo, tm, pol, seed=1, horizon_packets=200_000)
rel = np.abs(res.delays.delay_s - delays.delay_s) / delays.delay_s
print(f"\nevent simulation, 200k packets: "
      f"median deviation {np.median(rel)*100:.2f}%, worst {rel.max()*100:.2f}%")
