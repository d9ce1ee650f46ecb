"""Closed-form physics of a nanosphere in gas near a dual-beam standing-wave trap.

Covers particle mass, rarefied-gas momentum damping, Rayleigh polarizability,
and the intensity / potential / force fields of two counter-propagating
Gaussian beams of equal power and identical polarization.

Model notes
-----------
* The optical interaction is the Rayleigh gradient potential with a scalar
  intensity; the size parameter 2*pi*r/lambda ~ 0.6 for the default sphere
  makes this marginal, which is accepted as documented model error.
* Scattering and absorption forces are omitted: for balanced
  counter-propagating beams the net radiation pressure cancels.
* Gouy phase and beam ellipticity are neglected; the axial envelope is the
  ideal Gaussian-beam Lorentzian.
* The drag law is a single smooth transition-regime expression valid from
  the free-molecular limit through the slip regime (1e-7 to 1e2 mbar).

All functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import (
    ATOMIC_MASS,
    BOLTZMANN,
    MBAR,
    SPEED_OF_LIGHT,
    SUTHERLAND_C_AIR,
    VACUUM_PERMITTIVITY,
    VISCOSITY_REF_TEMPERATURE,
)

__all__ = [
    "Particle",
    "GasEnvironment",
    "TrapConfig",
    "FieldSample",
    "particle_mass",
    "polarizability",
    "dynamic_viscosity",
    "mean_free_path",
    "knudsen_number",
    "damping_rate",
    "trap_intensity",
    "trap_potential",
    "trap_force",
    "trap_fields",
    "trap_depth",
    "trap_frequencies",
]


@dataclass(frozen=True)
class Particle:
    """Homogeneous dielectric nanosphere.

    radius : m
    density : kg/m^3
    refractive_index : real index at the trap wavelength
    """

    radius: float
    density: float
    refractive_index: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("particle radius must be > 0")
        if not self.density > 0:
            raise ValueError("particle density must be > 0")
        if not self.refractive_index > 1:
            raise ValueError("refractive index must be > 1")

    @classmethod
    def silica(cls, radius: float = 150e-9) -> "Particle":
        """Dry silica sphere; density and index are typical handbook values
        for amorphous SiO2 at 1550 nm and can be overridden in config."""
        return cls(radius=radius, density=2000.0, refractive_index=1.44)


@dataclass(frozen=True)
class GasEnvironment:
    """Residual gas around the particle.

    pressure : Pa
    temperature : K
    molecular_mass : kg
    viscosity_ref : Pa s at 300 K, scaled to `temperature` by Sutherland's law
    """

    pressure: float
    temperature: float = 300.0
    molecular_mass: float = 28.97 * ATOMIC_MASS
    viscosity_ref: float = 1.85e-5

    def __post_init__(self):
        if self.pressure < 0:
            raise ValueError("gas pressure must be >= 0")
        if not self.temperature > 0:
            raise ValueError("gas temperature must be > 0")

    @classmethod
    def air(cls, pressure_mbar: float, temperature: float = 300.0) -> "GasEnvironment":
        return cls(pressure=pressure_mbar * MBAR, temperature=temperature)


@dataclass(frozen=True)
class TrapConfig:
    """Dual-beam standing-wave trap geometry.

    Two identical counter-propagating Gaussian beams, each carrying half of
    `total_power`, interfere along `axis` with the common focus at `center`.

    wavelength : m
    waist : m (1/e^2 intensity radius at the focus)
    total_power : W (sum of both beams)
    center : (3,) m
    axis : (3,) unit vector along the beams (standing-wave direction)
    """

    wavelength: float = 1550e-9
    waist: float = 6e-6
    total_power: float = 0.2
    center: tuple = (0.0, 0.0, 0.0)
    axis: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError("wavelength must be > 0")
        if not self.waist > 0:
            raise ValueError("waist must be > 0")
        if self.total_power < 0:
            raise ValueError("total power must be >= 0")
        ax = np.asarray(self.axis, dtype=float)
        if abs(float(ax @ ax) - 1.0) > 1e-9:
            raise ValueError("trap axis must be a unit vector")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "axis", tuple(float(a) for a in ax))

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def rayleigh_range(self) -> float:
        return math.pi * self.waist**2 / self.wavelength

    @property
    def peak_intensity(self) -> float:
        """On-axis intensity at the central antinode, 4 P / (pi w0^2)."""
        return 4.0 * self.total_power / (math.pi * self.waist**2)


@dataclass(frozen=True)
class FieldSample:
    """Field quantities evaluated at one position."""

    intensity: float        # W/m^2
    potential: float        # J, <= 0
    force: np.ndarray = field(repr=False)  # (3,) N


@functools.lru_cache(maxsize=256)
def particle_mass(p: Particle) -> float:
    """Mass of the sphere, (4/3) pi r^3 rho, in kg."""
    return (4.0 / 3.0) * math.pi * p.radius**3 * p.density


def polarizability(p: Particle) -> float:
    """Clausius-Mossotti polarizability 4 pi eps0 r^3 (n^2-1)/(n^2+2), SI (C m^2/V)."""
    n2 = p.refractive_index**2
    return 4.0 * math.pi * VACUUM_PERMITTIVITY * p.radius**3 * (n2 - 1.0) / (n2 + 2.0)


def dynamic_viscosity(g: GasEnvironment) -> float:
    """Gas viscosity at the environment temperature (Sutherland scaling from 300 K)."""
    t, t0, c = g.temperature, VISCOSITY_REF_TEMPERATURE, SUTHERLAND_C_AIR
    return g.viscosity_ref * (t / t0) ** 1.5 * (t0 + c) / (t + c)


def mean_free_path(g: GasEnvironment) -> float:
    """Gas mean free path from kinetic theory, eta/P * sqrt(pi kB T / 2 m)."""
    if g.pressure == 0.0:
        return math.inf
    eta = dynamic_viscosity(g)
    return (eta / g.pressure) * math.sqrt(
        math.pi * BOLTZMANN * g.temperature / (2.0 * g.molecular_mass)
    )


def knudsen_number(p: Particle, g: GasEnvironment) -> float:
    return mean_free_path(g) / p.radius


@functools.lru_cache(maxsize=256)
def damping_rate(p: Particle, g: GasEnvironment) -> float:
    """Momentum damping rate Gamma in 1/s.

    Transition-regime drag on a sphere,

        Gamma = (6 pi eta r / M) * 0.619/(0.619 + Kn) * (1 + c_K),
        c_K = 0.31 Kn / (0.785 + 1.152 Kn + Kn^2),

    with Kn the Knudsen number. Reduces to Stokes drag for Kn -> 0 and to a
    free-molecular (Epstein-like) law linear in pressure for Kn >> 1.
    Gamma(P=0) = 0 exactly.
    """
    if g.pressure == 0.0:
        return 0.0
    kn = knudsen_number(p, g)
    eta = dynamic_viscosity(g)
    stokes = 6.0 * math.pi * eta * p.radius / particle_mass(p)
    c_k = 0.31 * kn / (0.785 + 1.152 * kn + kn * kn)
    return stokes * 0.619 / (0.619 + kn) * (1.0 + c_k)


# ---------------------------------------------------------------------------
# Standing-wave fields
#
# Local coordinates: z = (pos - center) . axis along the beams, rho the
# distance from the beam axis. With s = z/zR and w(z) = w0 sqrt(1+s^2):
#
#   I(rho, z) = I_pk * exp(-2 rho^2 / w^2) / (1 + s^2) * cos^2(k z)
#   U = -(alpha / (2 eps0 c)) I,   F = -grad U  (analytic)
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=64)
def _derived(t: TrapConfig, p: Particle):
    """Per-(trap, particle) scalars reused on every field evaluation."""
    center = np.asarray(t.center)
    axis = np.asarray(t.axis)
    return center, axis, t.waist**2, t.rayleigh_range, t.wavenumber, trap_depth(t, p)


def _local_coords(t: TrapConfig, positions: np.ndarray):
    """Split positions (n,3) into axial offset z (n,) and radial rho^2 (n,)."""
    rel = positions - np.asarray(t.center)
    z = rel @ np.asarray(t.axis)
    rho2 = np.einsum("ij,ij->i", rel, rel) - z * z
    return rel, z, np.maximum(rho2, 0.0)


def _envelope_and_phase(t: TrapConfig, z: np.ndarray, rho2: np.ndarray):
    """Normalized intensity envelope (axial Lorentzian x radial Gaussian)
    and cos^2 of the standing-wave phase."""
    s2 = (z / t.rayleigh_range) ** 2
    w2 = t.waist**2 * (1.0 + s2)
    env = np.exp(-2.0 * rho2 / w2) / (1.0 + s2)
    cos2 = 0.5 * (1.0 + np.cos(2.0 * t.wavenumber * z))
    return env, cos2, w2, s2


def potential_and_force(
    t: TrapConfig, p: Particle, positions: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized potential (n,) and force (n,3) of the standing-wave trap.

    This is the single source of field math; the scalar operations and the
    trajectory engine both call it.
    """
    center, axis, w0sq, zr, k, depth = _derived(t, p)
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    rel = positions - center
    z = rel @ axis
    rho2 = np.maximum(np.einsum("ij,ij->i", rel, rel) - z * z, 0.0)

    one_s2 = 1.0 + (z / zr) ** 2
    w2 = w0sq * one_s2
    env = np.exp(-2.0 * rho2 / w2) / one_s2
    cos2 = 0.5 * (1.0 + np.cos(2.0 * k * z))

    env_cos = env * cos2
    u = -depth * env_cos

    rho_vec = rel - z[:, None] * axis[None, :]
    # radial: -dU/drho = -4 U0 env cos2 rho / w^2 along rho_vec
    radial_coef = -4.0 * depth * env_cos / w2

    # axial: envelope slope plus standing-wave phase gradient,
    # d/dz cos^2(kz) = -k sin(2kz)
    env_slope = (z / (zr * zr)) / one_s2 * (4.0 * rho2 / w2 - 2.0)
    f_axial = depth * env * (env_slope * cos2 - k * np.sin(2.0 * k * z))

    force = radial_coef[:, None] * rho_vec + f_axial[:, None] * axis[None, :]
    return u, force


def _point_potential_force(t: TrapConfig, p: Particle, x: float, y: float, z_lab: float):
    """Scalar-math field evaluation for tight single-particle loops.

    Same formulas as :func:`potential_and_force`; kept separate so batched
    code always goes through the vectorized path regardless of batch size.
    """
    center, axis, w0sq, zr, k, depth = _derived(t, p)
    rx, ry, rz = x - center[0], y - center[1], z_lab - center[2]
    z = rx * axis[0] + ry * axis[1] + rz * axis[2]
    rho2 = max(rx * rx + ry * ry + rz * rz - z * z, 0.0)

    one_s2 = 1.0 + (z / zr) ** 2
    w2 = w0sq * one_s2
    env = math.exp(-2.0 * rho2 / w2) / one_s2
    cos2 = 0.5 * (1.0 + math.cos(2.0 * k * z))

    env_cos = env * cos2
    u = -depth * env_cos
    radial_coef = -4.0 * depth * env_cos / w2
    env_slope = (z / (zr * zr)) / one_s2 * (4.0 * rho2 / w2 - 2.0)
    f_axial = depth * env * (env_slope * cos2 - k * math.sin(2.0 * k * z))

    fx = radial_coef * (rx - z * axis[0]) + f_axial * axis[0]
    fy = radial_coef * (ry - z * axis[1]) + f_axial * axis[1]
    fz = radial_coef * (rz - z * axis[2]) + f_axial * axis[2]
    return u, fx, fy, fz


def trap_intensity(t: TrapConfig, pos) -> float:
    """Optical intensity at `pos` in W/m^2."""
    positions = np.atleast_2d(np.asarray(pos, dtype=float))
    _, z, rho2 = _local_coords(t, positions)
    env, cos2, _, _ = _envelope_and_phase(t, z, rho2)
    out = t.peak_intensity * env * cos2
    return float(out[0]) if np.ndim(pos) == 1 else out


def trap_potential(t: TrapConfig, p: Particle, pos) -> float:
    """Gradient-force potential U = -(alpha / 2 eps0 c) I(pos), in J (<= 0)."""
    scalar = np.ndim(pos) == 1
    u, _ = potential_and_force(t, p, pos)
    return float(u[0]) if scalar else u


def trap_force(t: TrapConfig, p: Particle, pos) -> np.ndarray:
    """Analytic dipole force -grad U at `pos`, in N."""
    scalar = np.ndim(pos) == 1
    _, f = potential_and_force(t, p, pos)
    return f[0] if scalar else f


def trap_fields(t: TrapConfig, p: Particle, pos) -> FieldSample:
    """Bundle of intensity, potential and force at one position."""
    pos = np.asarray(pos, dtype=float)
    u, f = potential_and_force(t, p, pos)
    return FieldSample(
        intensity=trap_intensity(t, pos),
        potential=float(u[0]),
        force=f[0],
    )


def trap_depth(t: TrapConfig, p: Particle) -> float:
    """Well depth U0 = (alpha / 2 eps0 c) * 4P/(pi w0^2), linear in power, in J."""
    return (
        polarizability(p)
        / (2.0 * VACUUM_PERMITTIVITY * SPEED_OF_LIGHT)
        * t.peak_intensity
    )


def trap_frequencies(t: TrapConfig, p: Particle) -> tuple[float, float, float]:
    """Small-oscillation angular frequencies about the central antinode.

    Returns (Omega_axial, Omega_radial, Omega_radial) in rad/s with
    Omega_axial = sqrt(2 U0 k^2 / M) and Omega_radial = sqrt(4 U0 / (w0^2 M)).

    Raises ValueError when total_power is zero (no confinement).
    """
    if t.total_power == 0.0:
        raise ValueError("trap has zero power: no confinement")
    u0 = trap_depth(t, p)
    m = particle_mass(p)
    omega_axial = math.sqrt(2.0 * u0 * t.wavenumber**2 / m)
    omega_radial = math.sqrt(4.0 * u0 / (t.waist**2 * m))
    return omega_axial, omega_radial, omega_radial
