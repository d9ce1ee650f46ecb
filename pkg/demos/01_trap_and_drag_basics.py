"""Walk through the closed-form building blocks: trap fields and gas drag.

Run:  python3 demos/01_trap_and_drag_basics.py
"""

import numpy as np

from trapload import (
    GasEnvironment,
    Particle,
    TrapConfig,
    analytic_drag_position,
    damping_rate,
    particle_mass,
    trap_depth,
    trap_frequencies,
    trap_potential,
)
from trapload.constants import BOLTZMANN, MBAR

particle = Particle.silica()            # 300 nm diameter, n = 1.44
trap = TrapConfig()                     # 1550 nm, 6 um waist, 200 mW total

print("== particle ==")
print(f"radius          {particle.radius * 1e9:.0f} nm")
print(f"mass            {particle_mass(particle):.3e} kg")

print("\n== trap (two counter-propagating beams) ==")
kelvin = trap_depth(trap, particle) / BOLTZMANN
om_ax, om_rad, _ = trap_frequencies(trap, particle)
print(f"well depth      {kelvin:.0f} K  ({kelvin / 300:.1f} x room temperature)")
print(f"f_axial         {om_ax / 2 / np.pi / 1e3:.1f} kHz")
print(f"f_radial        {om_rad / 2 / np.pi / 1e3:.2f} kHz")

# the standing wave: potential along the axis shows lambda/2 wells under a
# Lorentzian envelope
z = np.linspace(-2e-6, 2e-6, 9)
u = [trap_potential(trap, particle, np.array([0.0, 0.0, zz])) for zz in z]
print("\naxial potential samples (z in um, U in units of the well depth):")
for zz, uu in zip(z, u):
    print(f"  z = {zz * 1e6:+.2f}   U/U0 = {uu / (-trap_depth(trap, particle)):+.3f}")

print("\n== drag versus pressure ==")
for mbar in (1e-6, 1e-3, 0.1, 1.0, 10.0, 100.0):
    gas = GasEnvironment.air(mbar)
    gamma = damping_rate(particle, gas)
    print(f"  {mbar:8.2g} mbar   Gamma = {gamma:10.3e} 1/s   "
          f"terminal speed = {9.81 / gamma if gamma else float('inf'):.3g} m/s")

print("\n== launch kinematics (no diffusion) ==")
gas = GasEnvironment.air(1.0)
gamma = damping_rate(particle, gas)
print(f"1 mbar, launch at 10 m/s downward from 8 mm:")
print(f"  stopping distance u/Gamma = {10.0 / gamma * 1e3:.2f} mm")
for t in (1e-4, 1e-3, 1e-2, 0.1, 1.0):
    y = analytic_drag_position(-10.0, gamma, t)
    print(f"  t = {t:7.4f} s   fallen {-y * 1e3:8.3f} mm")
