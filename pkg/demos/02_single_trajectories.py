"""Propagate individual launch events and look at their outcomes.

The same launch behaves completely differently with pressure: collisionless
fly-through, capture near the optimum, and a never-arriving crawl when the
gas is dense. Run:  python3 demos/02_single_trajectories.py
"""

import numpy as np

from trapload import LaunchDistribution, PropagationConfig, SimConfig
from trapload.montecarlo import simulate_launch_event
from trapload.physics import GasEnvironment

launch = LaunchDistribution.delta(20.0)  # stops right at the trap at ~1 mbar

for mbar, label in [
    (2.5e-7, "collisionless"),
    (1.0, "loading optimum"),
    (100.0, "diffusive crawl"),
]:
    cfg = SimConfig(
        gas=GasEnvironment.air(mbar),
        launch=launch,
        propagation=PropagationConfig(t_max=5.0),
    )
    print(f"\n== {mbar:g} mbar ({label}) ==")
    for event in range(6):
        out = simulate_launch_event(cfg, event)
        line = f"  event {event}: {out.kind.value:9s}"
        if out.arrival_time is not None:
            line += f"  arrived {out.arrival_time * 1e3:8.3f} ms"
        if out.capture_time is not None:
            line += (
                f"  captured at {out.capture_time * 1e3:7.2f} ms"
                f"  site {out.site_index:+d}"
                f"  (amplitude {out.site_intensity_fraction:.3f})"
            )
        print(line)

# a trace of one captured trajectory, decimated
from trapload.cli import simulate_launch_event_with_trace

cfg = SimConfig(
    gas=GasEnvironment.air(1.0),
    launch=launch,
    propagation=PropagationConfig(t_max=5.0),
)
out = None
for event in range(40):
    probe = simulate_launch_event(cfg, event)
    if probe.kind.value == "trapped":
        out = simulate_launch_event_with_trace(cfg, event, decimate=200)
        break
if out is not None:
    t, x, y, z = out.trace[:, 0], out.trace[:, 1], out.trace[:, 2], out.trace[:, 3]
    print(f"\ncaptured event trace: {len(t)} decimated samples")
    print(f"  height above trap: {y[0] * 1e3:.1f} mm -> {y[-1] * 1e6:.2f} um")
    print(f"  final axial position {z[-1] * 1e9:.0f} nm "
          f"(site {out.site_index:+d} at {out.site_index * 775:.0f} nm)")
