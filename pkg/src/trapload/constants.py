"""Physical constants (CODATA 2018) and unit conversions used throughout.

All internal computation is strict SI; configuration layers convert from
experimentalists' units (mbar, atomic mass units) at the boundary.
"""

BOLTZMANN = 1.380649e-23           # J/K (exact)
SPEED_OF_LIGHT = 299792458.0       # m/s (exact)
VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m
ATOMIC_MASS = 1.66053906660e-27    # kg
STANDARD_GRAVITY = 9.81            # m/s^2, along -y in the simulation frame

MBAR = 100.0                       # Pa per mbar

# Sutherland constant for air-like gases, used to scale viscosity with
# temperature away from the 300 K reference.
SUTHERLAND_C_AIR = 110.4           # K
VISCOSITY_REF_TEMPERATURE = 300.0  # K
