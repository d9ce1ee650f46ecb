"""Arrival-time histograms and launch-speed reconstruction.

In the collisionless regime, arrival times at the trap invert cleanly to
the launch-speed distribution (time of flight over a known drop). At mbar
pressures, collisions slow the mean and remove the slowest particles.
Run:  python3 demos/05_arrival_times_and_speeds.py
"""

import numpy as np

from trapload import PropagationConfig, SimConfig
from trapload.analysis import arrival_histogram, velocity_from_arrival
from trapload.montecarlo import run_events
from trapload.physics import GasEnvironment


def reconstruct(pressure_mbar, n_events, t_max):
    cfg = SimConfig(
        gas=GasEnvironment.air(pressure_mbar),
        propagation=PropagationConfig(t_max=t_max),
    )
    outs, _ = run_events(cfg, n_events, master_seed=55)
    transit = cfg.substrate_distance - (
        cfg.propagation.far_field_radius * cfg.trap.waist
    )
    hist = arrival_histogram(outs, cfg.substrate_distance, bins=14)
    speeds = np.array(
        [velocity_from_arrival(t, transit) for t in hist.times]
    )
    return hist, speeds


print("== 2.5e-7 mbar: free flight ==")
hist, speeds = reconstruct(2.5e-7, 3000, t_max=0.5)
print(f"{hist.times.size} arrivals; median reconstructed speed "
      f"{np.median(speeds):.2f} m/s (launch median is 10 m/s)")
print("arrival-time histogram (ms : count):")
for lo, hi, c in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
    bar = "#" * int(60 * c / hist.counts.max())
    print(f"  {lo * 1e3:6.2f}-{hi * 1e3:6.2f}  {bar}")

print("\n== 0.12 mbar: a few thousand collisions en route ==")
hist, speeds = reconstruct(0.12, 3000, t_max=2.0)
print(f"{hist.times.size} arrivals; median apparent speed "
      f"{np.median(speeds):.2f} m/s (drag slows the flight, so the naive "
      "time-of-flight conversion underestimates the launch speed)")
