"""Capture probability versus pressure: the loading window.

A reduced version of the headline numerical experiment (1000 events per
point instead of 10000, so it finishes in well under a minute). The curve
shows a sharp onset once drag can stop particles before the trap, an
optimum near 1 mbar, and a collapse at high pressure where arrivals take
longer than the simulated-run wall. Run:  python3 demos/03_pressure_sweep.py
"""

import numpy as np

from trapload import PropagationConfig, ShotModel, SimConfig, SweepParameter, SweepSpec
from trapload.constants import MBAR
from trapload.montecarlo import run_sweep, shot_outcome_statistics

spec = SweepSpec(
    parameter=SweepParameter.PRESSURE,
    grid=tuple(np.geomspace(1e-2, 1e2, 13) * MBAR),
    events_per_point=1000,
    base_config=SimConfig(propagation=PropagationConfig(t_max=10.0)),
    master_seed=20260808,
)
result = run_sweep(spec, progress=lambda k, v, pt: print(
    f"  point {k + 1:2d}/13  {v / MBAR:8.3g} mbar  p = {pt.probability:.4f}"
))

print("\npressure (mbar)   p_single   95% interval      mean capture  timeouts")
for pt in result.points:
    mean_ct = "-" if pt.mean_capture_time is None else f"{pt.mean_capture_time:8.3f} s"
    print(
        f"{pt.value / MBAR:12.3g}   {pt.probability:8.4f}"
        f"   [{pt.ci_lo:.4f}, {pt.ci_hi:.4f}]   {mean_ct:>12s}  {pt.timeouts:6d}"
    )

best = max(result.points, key=lambda pt: pt.probability)
print(f"\noptimum: p = {best.probability:.4f} at {best.value / MBAR:.3g} mbar")

# single-particle capture is rare, but each desorption pulse launches many
# particles; compose with Poisson shot statistics for per-pulse efficiency
for lam in (30, 100, 300):
    p_none, p_single, p_multi = shot_outcome_statistics(
        ShotModel(lam, best.probability)
    )
    print(
        f"lambda = {lam:4d} particles/pulse:  P(trap something) = {1 - p_none:.3f}"
        f"   P(exactly one) = {p_single:.3f}   P(multiple) = {p_multi:.3f}"
    )
