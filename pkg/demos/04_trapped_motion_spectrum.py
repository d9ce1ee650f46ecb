"""Motion spectrum of a trapped particle and the damped-oscillator fit.

Thermalize a trapped sphere, record its axial coordinate, estimate the
power spectral density with Welch averaging, and fit the line to recover
the trap frequency and the gas damping rate.
Run:  python3 demos/04_trapped_motion_spectrum.py
"""

import math

import numpy as np

from trapload import GasEnvironment, Particle, TimeSeries, TrapConfig
from trapload.analysis import lorentzian_fit, welch_psd
from trapload.constants import BOLTZMANN, MBAR
from trapload.dynamics import langevin_ensemble_step
from trapload.physics import (
    damping_rate,
    particle_mass,
    potential_and_force,
    trap_frequencies,
)

particle = Particle.silica()
trap = TrapConfig()
gas = GasEnvironment(pressure=1.0 * MBAR, temperature=100.0)

m = particle_mass(particle)
kt = BOLTZMANN * gas.temperature
om_ax, _, _ = trap_frequencies(trap, particle)
gamma = damping_rate(particle, gas)
print(f"predicted axial frequency  {om_ax / 2 / math.pi:.0f} Hz")
print(f"predicted linewidth        {gamma / 2 / math.pi:.0f} Hz")

dt = 2 * math.pi / om_ax / 40
record_every = 4
n_particles = 8
samples = 1 << 16

rng = np.random.default_rng(12)
pos = np.zeros((n_particles, 3))
vel = rng.normal(0.0, math.sqrt(kt / m), size=(n_particles, 3))
force = lambda q: potential_and_force(trap, particle, q)[1]

print("thermalizing and recording ...")
for _ in range(int(10 / gamma / dt)):
    pos, vel = langevin_ensemble_step(pos, vel, force, particle, gas, dt, rng, gravity=True)
traces = np.empty((n_particles, samples))
for k in range(samples * record_every):
    pos, vel = langevin_ensemble_step(pos, vel, force, particle, gas, dt, rng, gravity=True)
    if k % record_every == 0:
        traces[:, k // record_every] = pos[:, 2]

fs = 1.0 / (dt * record_every)
acc = None
for trace in traces:
    psd = welch_psd(TimeSeries(fs, trace), 1 << 13, 0.5)
    acc = psd.densities if acc is None else acc + psd.densities
mean = type(psd)(psd.frequencies, acc / n_particles, psd.segment_length, 0.5)

f_pred = om_ax / 2 / math.pi
fit = lorentzian_fit(mean, (0.8 * f_pred, 1.2 * f_pred))
print(f"\nfit:  f0 = {fit.center_frequency:.0f} Hz "
      f"({(fit.center_frequency / f_pred - 1) * 100:+.2f}% vs prediction)")
print(f"      linewidth = {fit.linewidth:.0f} Hz "
      f"({(fit.linewidth * 2 * math.pi / gamma - 1) * 100:+.1f}% vs drag rate)")
print(f"      converged = {fit.converged}")
