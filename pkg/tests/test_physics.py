"""Unit tests for closed-form physics: mass, drag, polarizability, trap fields."""

import math

import numpy as np
import pytest

from trapload import physics
from trapload.constants import ATOMIC_MASS, BOLTZMANN, MBAR
from trapload.physics import (
    GasEnvironment,
    Particle,
    TrapConfig,
    damping_rate,
    particle_mass,
    polarizability,
    trap_depth,
    trap_force,
    trap_frequencies,
    trap_intensity,
    trap_potential,
)

SILICA = Particle.silica()
AIR_1MBAR = GasEnvironment.air(1.0)
TRAP = TrapConfig()


def test_particle_mass_hand_value():
    # (4/3) pi (150e-9)^3 * 2000, evaluated by hand
    assert particle_mass(SILICA) == pytest.approx(2.827433388e-17, rel=1e-8)


def test_particle_mass_cubic_scaling():
    doubled = Particle(radius=300e-9, density=2000.0, refractive_index=1.44)
    assert particle_mass(doubled) == pytest.approx(8.0 * particle_mass(SILICA), rel=1e-12)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(radius=0.0, density=2000.0, refractive_index=1.44),
        dict(radius=-1e-9, density=2000.0, refractive_index=1.44),
        dict(radius=150e-9, density=0.0, refractive_index=1.44),
        dict(radius=150e-9, density=2000.0, refractive_index=1.0),
    ],
)
def test_particle_invariants(kwargs):
    with pytest.raises(ValueError):
        Particle(**kwargs)


def test_polarizability_limits_and_value():
    nearly_matched = Particle(radius=150e-9, density=2000.0, refractive_index=1.0 + 1e-9)
    assert polarizability(nearly_matched) == pytest.approx(0.0, abs=1e-39)

    conductor_like = Particle(radius=150e-9, density=2000.0, refractive_index=1e6)
    full = 4.0 * math.pi * physics.VACUUM_PERMITTIVITY * (150e-9) ** 3
    assert polarizability(conductor_like) == pytest.approx(full, rel=1e-6)

    # hand evaluation of (n^2-1)/(n^2+2) r^3 for n = 1.44
    alpha_over = polarizability(SILICA) / (4.0 * math.pi * physics.VACUUM_PERMITTIVITY)
    assert alpha_over == pytest.approx(8.894835e-22, rel=1e-6)


def test_damping_vacuum_limit():
    assert damping_rate(SILICA, GasEnvironment(pressure=0.0)) == 0.0


def test_damping_independent_expression():
    # Single-expression evaluation of the drag law, written out independently.
    eta, temp, pres = 1.85e-5, 300.0, 1.0 * MBAR
    m_gas = 28.97 * ATOMIC_MASS
    r, rho = 150e-9, 2000.0
    mass = 4.0 / 3.0 * math.pi * r**3 * rho
    mfp = (eta / pres) * math.sqrt(math.pi * BOLTZMANN * temp / (2.0 * m_gas))
    kn = mfp / r
    expected = (
        (6.0 * math.pi * eta * r / mass)
        * (0.619 / (0.619 + kn))
        * (1.0 + 0.31 * kn / (0.785 + 1.152 * kn + kn**2))
    )
    got = damping_rate(SILICA, AIR_1MBAR)
    assert got == pytest.approx(expected, rel=1e-12)
    assert 1e3 < got < 1e4


def test_damping_linear_in_pressure_free_molecular():
    lo = damping_rate(SILICA, GasEnvironment.air(0.01))
    hi = damping_rate(SILICA, GasEnvironment.air(0.02))
    assert hi / lo == pytest.approx(2.0, rel=1e-3)


def test_damping_monotone_in_pressure():
    pressures = np.logspace(-8, 2, 100)
    rates = [damping_rate(SILICA, GasEnvironment.air(p)) for p in pressures]
    assert all(b > a for a, b in zip(rates, rates[1:]))


def test_intensity_peak_value():
    # 4 P / (pi w0^2) for 200 mW into a 6 um waist
    peak = trap_intensity(TRAP, np.zeros(3))
    assert peak == pytest.approx(7.0735530e9, rel=1e-6)


def test_intensity_node_and_radial_envelope():
    node = np.array([0.0, 0.0, TRAP.wavelength / 4.0])
    assert trap_intensity(TRAP, node) <= 1e-6 * trap_intensity(TRAP, np.zeros(3))

    off_axis = np.array([TRAP.waist, 0.0, 0.0])
    ratio = trap_intensity(TRAP, off_axis) / trap_intensity(TRAP, np.zeros(3))
    assert ratio == pytest.approx(math.exp(-2.0), rel=1e-9)


def test_potential_center_equals_minus_depth():
    u0 = trap_potential(TRAP, SILICA, np.zeros(3))
    assert u0 == pytest.approx(-trap_depth(TRAP, SILICA), rel=1e-12)


def test_potential_depth_oracle_and_band():
    # alpha I_max / (2 eps0 c kB), single independent expression
    alpha = polarizability(SILICA)
    i_max = 4.0 * TRAP.total_power / (math.pi * TRAP.waist**2)
    expected_kelvin = (
        alpha * i_max / (2.0 * physics.VACUUM_PERMITTIVITY * physics.SPEED_OF_LIGHT)
    ) / BOLTZMANN
    got_kelvin = trap_depth(TRAP, SILICA) / BOLTZMANN
    assert got_kelvin == pytest.approx(expected_kelvin, rel=1e-12)
    assert 1e3 < got_kelvin < 1e4


def test_potential_zero_power():
    dark = TrapConfig(total_power=0.0)
    pts = np.array([[0.0, 0.0, 0.0], [1e-6, 2e-6, -3e-6]])
    assert np.all(trap_potential(dark, SILICA, pts) == 0.0)
    assert np.all(trap_force(dark, SILICA, pts) == 0.0)


def test_potential_nonpositive_and_finite():
    rng = np.random.default_rng(11)
    pts = rng.uniform(-5e-5, 5e-5, size=(500, 3))
    u = trap_potential(TRAP, SILICA, pts)
    f = trap_force(TRAP, SILICA, pts)
    assert np.all(u <= 0.0)
    assert np.all(np.isfinite(u))
    assert np.all(np.isfinite(f))


def test_force_zero_at_center():
    f = trap_force(TRAP, SILICA, np.zeros(3))
    assert np.allclose(f, 0.0, atol=1e-30)


def _force_fd(pos, h_axial=2e-10, h_radial=2e-9):
    """Fourth-order central differences of the potential."""
    f = np.zeros(3)
    for i in range(3):
        h = h_axial if i == 2 else h_radial
        e = np.zeros(3)
        e[i] = h
        um2 = trap_potential(TRAP, SILICA, pos - 2 * e)
        um1 = trap_potential(TRAP, SILICA, pos - e)
        up1 = trap_potential(TRAP, SILICA, pos + e)
        up2 = trap_potential(TRAP, SILICA, pos + 2 * e)
        f[i] = -(um2 - 8 * um1 + 8 * up1 - up2) / (12 * h)
    return f


def test_force_matches_finite_differences():
    # random points within 3 waists, keeping |F| bounded away from zero
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 100:
        pos = rng.uniform(-3 * TRAP.waist, 3 * TRAP.waist, size=3)
        f = trap_force(TRAP, SILICA, pos)
        norm = np.linalg.norm(f)
        if norm < 1e-18:
            continue
        fd = _force_fd(pos)
        assert np.linalg.norm(f - fd) / norm < 1e-6
        checked += 1


def test_force_axial_mirror_symmetry():
    for z in [0.3e-6, 1.1e-6, 5.7e-6]:
        fp = trap_force(TRAP, SILICA, np.array([0.0, 0.0, z]))
        fm = trap_force(TRAP, SILICA, np.array([0.0, 0.0, -z]))
        assert fp[2] == pytest.approx(-fm[2], rel=1e-12)


def test_potential_periodicity_on_axis():
    half = TRAP.wavelength / 2.0
    zr = TRAP.rayleigh_range
    for z in np.linspace(-8 * half, 8 * half, 17):
        u1 = trap_potential(TRAP, SILICA, np.array([0.0, 0.0, z]))
        u2 = trap_potential(TRAP, SILICA, np.array([0.0, 0.0, z + half]))
        env1 = 1.0 / (1.0 + (z / zr) ** 2)
        env2 = 1.0 / (1.0 + ((z + half) / zr) ** 2)
        if abs(u1) < 1e-40:
            continue
        assert u2 / env2 == pytest.approx(u1 / env1, rel=1e-12)


def test_depth_linear_in_power():
    single = trap_depth(TRAP, SILICA)
    double = trap_depth(TrapConfig(total_power=0.4), SILICA)
    assert double == pytest.approx(2.0 * single, rel=1e-12)
    assert trap_depth(TrapConfig(total_power=0.0), SILICA) == 0.0


def test_depth_at_10mw_confines_room_temperature():
    weak = TrapConfig(total_power=0.010)
    assert trap_depth(weak, SILICA) / BOLTZMANN > 300.0


def test_frequency_ratio_geometric():
    for power in [0.010, 0.2, 1.0]:
        t = TrapConfig(total_power=power)
        om_ax, om_r, om_r2 = trap_frequencies(t, SILICA)
        assert om_r == om_r2
        assert om_ax / om_r == pytest.approx(
            t.wavenumber * t.waist / math.sqrt(2.0), rel=1e-12
        )


def test_frequency_power_scaling():
    om1 = trap_frequencies(TrapConfig(total_power=0.05), SILICA)
    om4 = trap_frequencies(TrapConfig(total_power=0.20), SILICA)
    assert om4[0] == pytest.approx(2.0 * om1[0], rel=1e-12)
    assert om4[1] == pytest.approx(2.0 * om1[1], rel=1e-12)


def test_frequency_zero_power_errors():
    with pytest.raises(ValueError):
        trap_frequencies(TrapConfig(total_power=0.0), SILICA)


def _curvature_frequency(points, values, mass):
    """Least-squares parabola through sampled potential; returns sqrt(2a/M)."""
    coeffs = np.polyfit(points, values, 2)
    return math.sqrt(2.0 * coeffs[0] / mass)


def test_frequencies_against_parabola_fit():
    m = particle_mass(SILICA)
    om_ax, om_r, _ = trap_frequencies(TRAP, SILICA)

    z = np.linspace(-5e-9, 5e-9, 41)
    u_ax = np.array([trap_potential(TRAP, SILICA, np.array([0.0, 0.0, zz])) for zz in z])
    assert _curvature_frequency(z, u_ax, m) == pytest.approx(om_ax, rel=1e-3)

    x = np.linspace(-8e-8, 8e-8, 41)
    u_r = np.array([trap_potential(TRAP, SILICA, np.array([xx, 0.0, 0.0])) for xx in x])
    assert _curvature_frequency(x, u_r, m) == pytest.approx(om_r, rel=1e-3)


def test_trap_fields_bundle():
    sample = physics.trap_fields(TRAP, SILICA, np.array([1e-6, 0.0, 2e-7]))
    assert sample.intensity >= 0.0
    assert sample.potential <= 0.0
    assert sample.force.shape == (3,)
