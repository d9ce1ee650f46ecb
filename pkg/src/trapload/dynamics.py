"""Time propagation of a single nanoparticle launched toward the trap.

Three propagation layers, from exact to adaptive:

* :func:`analytic_drag_position` - closed-form vertical drag trajectory
  (gravity + linear drag, no diffusion), with a series branch to avoid
  catastrophic cancellation at small Gamma*t.
* :func:`langevin_step` - one splitting step of underdamped Langevin
  dynamics (half-kick, half-drift, exact OU, half-drift, half-kick). The
  friction-noise substep uses the exact Ornstein-Uhlenbeck decay and
  variance, so the step is stable for arbitrary Gamma*dt; with
  Gamma = T = 0 it reduces to velocity Verlet.
* :func:`far_field_propagate` - exact Gaussian transition density of free
  Langevin motion (gravity + drag + noise, no trap force) over any time
  step; used far from the trap where the optical force is negligible.

:func:`propagate_trajectory` combines them with capture detection and is a
thin wrapper over a batched engine (:func:`propagate_batch`) that advances
many independent trajectories in lockstep, each consuming noise from its own
random generator so results are bitwise independent of batch composition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .constants import BOLTZMANN, STANDARD_GRAVITY
from .physics import (
    GasEnvironment,
    Particle,
    TrapConfig,
    damping_rate,
    particle_mass,
    potential_and_force,
    trap_depth,
    trap_frequencies,
)

__all__ = [
    "KineticState",
    "PropagationConfig",
    "OutcomeKind",
    "TrajectoryOutcome",
    "ConfigurationError",
    "analytic_drag_position",
    "msd_free_diffusion",
    "langevin_step",
    "langevin_ensemble_step",
    "far_field_propagate",
    "propagate_trajectory",
    "propagate_batch",
]

GRAVITY_VECTOR = np.array([0.0, -STANDARD_GRAVITY, 0.0])


class ConfigurationError(ValueError):
    """Inconsistent propagation settings (e.g. dt too coarse for the trap)."""


@dataclass
class KineticState:
    """Position (m), velocity (m/s) and time (s) of one particle."""

    position: np.ndarray
    velocity: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        # nan and inf both poison the sum; cheap enough for per-step use
        if not math.isfinite(float(self.position.sum()) + float(self.velocity.sum())):
            raise ValueError("kinetic state must be finite")


def _state(px, py, pz, vx, vy, vz, t) -> KineticState:
    """Constructor bypass for the stepping hot path (inputs known finite)."""
    s = KineticState.__new__(KineticState)
    s.position = np.array((px, py, pz))
    s.velocity = np.array((vx, vy, vz))
    s.time = t
    return s


@dataclass(frozen=True)
class PropagationConfig:
    """Settings for full-trajectory propagation.

    dt_fine : s, finest Langevin step near the trap. The engine coarsens the
        step adaptively up to one twentieth of the fastest trap period when
        the particle is slow enough that the standing-wave fringes stay
        resolved (lambda/4 per 20 steps at the current speed).
    far_field_radius : multiples of the waist; outside this sphere the exact
        free-flight transition replaces Langevin stepping.
    t_max : s, wall of simulated time after which a trajectory times out.
        The default deliberately censors the slow diffusive arrivals seen at
        high pressure.
    capture_hold_time : s of uninterrupted negative local energy required to
        declare capture.
    capture_radius : multiples of the waist around one antinode within which
        the hold must persist.
    rng_seed : default seed when no generator is supplied.
    """

    dt_fine: float = 2e-9
    far_field_radius: float = 60.0
    t_max: float = 10.0
    capture_hold_time: float = 5e-3
    capture_radius: float = 3.0
    rng_seed: int = 2026

    def __post_init__(self):
        if not self.dt_fine > 0:
            raise ConfigurationError("dt_fine must be > 0")
        if not self.t_max > 0:
            raise ConfigurationError("t_max must be > 0")
        if not self.capture_hold_time > 0:
            raise ConfigurationError("capture_hold_time must be > 0")
        if not self.far_field_radius > self.capture_radius:
            raise ConfigurationError("far_field_radius must exceed capture_radius")


class OutcomeKind(Enum):
    TRAPPED = "trapped"
    ESCAPED = "escaped"
    TIMED_OUT = "timed_out"


@dataclass
class TrajectoryOutcome:
    """Result of one launch event.

    For trapped events, `site_index` is the antinode index along the axis
    (0 = central) and `site_intensity_fraction` the local antinode envelope
    relative to the central one, 1/(1 + (z_site/z_R)^2).
    `arrival_time` is the first entry into the far-field sphere, when it
    happened before the trajectory ended.
    """

    kind: OutcomeKind
    capture_time: Optional[float] = None
    site_index: Optional[int] = None
    site_intensity_fraction: Optional[float] = None
    arrival_time: Optional[float] = None
    trace: Optional[np.ndarray] = None  # rows: t, x, y, z, vx, vy, vz


# ---------------------------------------------------------------------------
# Analytic drag kinematics
# ---------------------------------------------------------------------------

# phi1(x) = (1 - exp(-x)) / x, phi2(x) = (exp(-x) - 1 + x) / x^2.
# Both go through series branches at small argument where the direct
# expressions cancel catastrophically; thresholds validated against
# high-precision arithmetic in the tests.
_PHI1_SWITCH = 1e-6
_PHI2_SWITCH = 1e-4


def _phi1(x: float) -> float:
    if x < _PHI1_SWITCH:
        return 1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0
    return -math.expm1(-x) / x


def _phi2(x: float) -> float:
    if x < _PHI2_SWITCH:
        return 0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0
    return (math.expm1(-x) + x) / (x * x)


def analytic_drag_position(u: float, gamma: float, t: float) -> float:
    """Vertical displacement after time t under gravity and linear drag.

    Closed form (1 - e^(-Gamma t)) (g/Gamma^2 + u/Gamma) - (g/Gamma) t,
    evaluated in the cancellation-free form u t phi1 - g t^2 phi2 so that
    the ballistic limit u t - g t^2 / 2 is recovered smoothly as
    Gamma t -> 0. `u` is the initial vertical velocity (negative for a
    downward launch); the return value is the displacement from the start.

    Raises ValueError for negative Gamma. Gamma = 0 is allowed and exact.
    """
    if gamma < 0:
        raise ValueError("damping rate must be >= 0")
    if t < 0:
        raise ValueError("time must be >= 0")
    x = gamma * t
    return u * t * _phi1(x) - STANDARD_GRAVITY * t * t * _phi2(x)


def msd_free_diffusion(p: Particle, g: GasEnvironment, t: float) -> float:
    """Long-time one-dimensional mean-square displacement 2 kB T / (M Gamma) t."""
    gamma = damping_rate(p, g)
    if gamma == 0.0:
        raise ValueError("no diffusive limit at zero damping")
    if t < 0:
        raise ValueError("time must be >= 0")
    return 2.0 * BOLTZMANN * g.temperature / (particle_mass(p) * gamma) * t


# ---------------------------------------------------------------------------
# Langevin splitting step (kick, exact OU, drift, kick)
# ---------------------------------------------------------------------------


def _ou_coefficients(gamma: float, dt, kt_over_m: float):
    """Exact OU velocity decay exp(-Gamma dt) and noise std per step."""
    x = gamma * np.asarray(dt, dtype=float)
    decay = np.exp(-x)
    variance = kt_over_m * (-np.expm1(-2.0 * x))
    return decay, np.sqrt(np.maximum(variance, 0.0))


def _baoab_step(pos, vel, force0, force_at, mass, decay, sigma_v, noise, dt, grav):
    """One symmetric splitting step for (n,3) arrays.

    Sequence: half-kick, half-drift, exact OU, half-drift, half-kick. The
    drift is split around the friction-noise substep so the position
    quadrature of a decaying velocity is centered (second-order accurate);
    the asymmetric kick-OU-drift-kick variant carries an O(Gamma dt) bias
    on the launch transient that would violate the closed-form drag oracle.

    dt, decay, sigma_v are (n,1). Returns updated position, velocity and
    the force at the new position (reusable as `force0` of the next step).
    """
    half = 0.5 * dt
    vel = vel + half * (force0 / mass + grav)
    pos = pos + vel * half
    if noise is None:
        vel = vel * decay
    else:
        vel = vel * decay + sigma_v * noise
    pos = pos + vel * half
    force1 = force_at(pos)
    vel = vel + half * (force1 / mass + grav)
    return pos, vel, force1


def langevin_step(
    s: KineticState,
    fields: Optional[Callable[[np.ndarray], np.ndarray]],
    p: Particle,
    g: GasEnvironment,
    dt: float,
    rng: np.random.Generator,
    gravity: bool = True,
) -> KineticState:
    """Advance one particle by a single splitting step of length dt.

    `fields` maps a position (3,) to the trap force (3,) in newtons; pass
    None for a free particle. Gravity acts along -y unless disabled.
    The friction-noise substep is exact, so any Gamma dt is stable; noise is
    drawn only when both Gamma and the gas temperature are nonzero, which
    keeps noiseless runs reproducible and cheap.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    mass = particle_mass(p)
    gamma = damping_rate(p, g)
    half = 0.5 * dt
    gy = -STANDARD_GRAVITY if gravity else 0.0

    px, py, pz = s.position.tolist()
    vx, vy, vz = s.velocity.tolist()

    if fields is not None:
        f = fields(np.array([px, py, pz]))
        vx += half * f[0] / mass
        vy += half * (f[1] / mass + gy)
        vz += half * f[2] / mass
    else:
        vy += half * gy

    px += vx * half
    py += vy * half
    pz += vz * half

    decay = math.exp(-gamma * dt)
    if gamma > 0.0 and g.temperature > 0.0:
        sigma = math.sqrt(
            BOLTZMANN * g.temperature / mass * (-math.expm1(-2.0 * gamma * dt))
        )
        nx, ny, nz = rng.standard_normal(3)
        vx = vx * decay + sigma * nx
        vy = vy * decay + sigma * ny
        vz = vz * decay + sigma * nz
    else:
        vx *= decay
        vy *= decay
        vz *= decay

    px += vx * half
    py += vy * half
    pz += vz * half

    if fields is not None:
        f = fields(np.array([px, py, pz]))
        vx += half * f[0] / mass
        vy += half * (f[1] / mass + gy)
        vz += half * f[2] / mass
    else:
        vy += half * gy

    return _state(px, py, pz, vx, vy, vz, s.time + dt)


def langevin_ensemble_step(
    positions: np.ndarray,
    velocities: np.ndarray,
    force_fn: Optional[Callable[[np.ndarray], np.ndarray]],
    p: Particle,
    g: GasEnvironment,
    dt: float,
    rng: np.random.Generator,
    gravity: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized splitting step for an (n,3) ensemble sharing one generator.

    Intended for thermal-statistics studies (equipartition, MSD, spectra)
    where per-event reproducibility is not required.
    """
    mass = particle_mass(p)
    gamma = damping_rate(p, g)
    kt_over_m = BOLTZMANN * g.temperature / mass
    grav = GRAVITY_VECTOR if gravity else np.zeros(3)

    def force_at(q):
        if force_fn is None:
            return np.zeros_like(q)
        return force_fn(q)

    force0 = force_at(positions)
    decay, sigma = _ou_coefficients(gamma, dt, kt_over_m)
    noise = None
    if gamma > 0.0 and g.temperature > 0.0:
        noise = rng.standard_normal(positions.shape)
    pos, vel, _ = _baoab_step(
        positions, velocities, force0, force_at, mass,
        decay, sigma, noise, dt, grav,
    )
    return pos, vel


# ---------------------------------------------------------------------------
# Exact free-flight transition (gravity + drag + noise, no trap)
# ---------------------------------------------------------------------------

_G_SWITCH = 0.02


def _var_position_factor(x: np.ndarray) -> np.ndarray:
    """G(x) = (2x - 3 + 4 e^-x - e^-2x) / x^2, the position-variance factor.

    sigma_xx^2 = (kB T / M) dt^2 G(Gamma dt). Series for small x avoids the
    triple cancellation; G(0) = 0 recovers the noiseless ballistic limit.
    """
    x = np.asarray(x, dtype=float)
    small = x < _G_SWITCH
    xs = np.where(small, x, 1.0)
    series = xs * (2.0 / 3.0 + xs * (-0.5 + xs * (7.0 / 30.0 - xs / 12.0)))
    xl = np.where(small, 1.0, x)
    exact = (2.0 * xl - 3.0 + 4.0 * np.exp(-xl) - np.exp(-2.0 * xl)) / (xl * xl)
    return np.where(small, series, exact)


def _phi1_vec(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    small = x < _PHI1_SWITCH
    xs = np.where(small, x, 1.0)
    series = 1.0 - xs / 2.0 + xs * xs / 6.0 - xs**3 / 24.0
    xl = np.where(small, 1.0, x)
    exact = -np.expm1(-xl) / xl
    return np.where(small, series, exact)


def _phi2_vec(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    small = x < _PHI2_SWITCH
    xs = np.where(small, x, 1.0)
    series = 0.5 - xs / 6.0 + xs * xs / 24.0 - xs**3 / 120.0
    xl = np.where(small, 1.0, x)
    exact = (np.expm1(-xl) + xl) / (xl * xl)
    return np.where(small, series, exact)


def _free_transition(pos, vel, gamma, dt, kt_over_m, grav, noise):
    """Exact Langevin transition over per-event steps dt (n,).

    Means follow the drag kinematics (position: u t phi1 + a t^2 phi2 per
    axis); fluctuations use the exact OU position/velocity covariance.
    `noise` is (n, 6) standard normals (position row then velocity row per
    axis triple) or None for the deterministic limit.
    """
    dt = np.asarray(dt, dtype=float)
    x = gamma * dt
    phi1 = _phi1_vec(x)[:, None]
    phi2 = _phi2_vec(x)[:, None]
    dtc = dt[:, None]

    mean_pos = pos + vel * dtc * phi1 + grav * dtc * dtc * phi2
    mean_vel = vel * np.exp(-x)[:, None] + grav * dtc * phi1

    if noise is None:
        return mean_pos, mean_vel

    var_v = kt_over_m * (-np.expm1(-2.0 * x))
    var_x = kt_over_m * dt * dt * _var_position_factor(x)
    cov_xv = kt_over_m * dt * x * _phi1_vec(x) ** 2

    sd_x = np.sqrt(np.maximum(var_x, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(var_x > 0.0, cov_xv / np.where(var_x > 0, var_x, 1.0), 0.0)
    resid = np.maximum(var_v - slope * cov_xv, 0.0)
    sd_resid = np.sqrt(resid)

    z_pos = noise[:, 0:3]
    z_vel = noise[:, 3:6]
    dx = sd_x[:, None] * z_pos
    new_pos = mean_pos + dx
    new_vel = mean_vel + slope[:, None] * dx + sd_resid[:, None] * z_vel
    return new_pos, new_vel


def far_field_propagate(
    s: KineticState,
    dt: float,
    p: Particle,
    g: GasEnvironment,
    rng: np.random.Generator,
    gravity: bool = True,
) -> KineticState:
    """Advance a particle far from the trap by dt in one exact draw.

    Samples the joint Gaussian transition of free Langevin motion (gravity,
    drag and thermal noise; trap force neglected), valid for any dt. At
    T = 0 it reproduces the drag kinematics exactly; at dt = 0 the state is
    unchanged.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if dt == 0.0:
        return KineticState(s.position.copy(), s.velocity.copy(), s.time)
    mass = particle_mass(p)
    gamma = damping_rate(p, g)
    kt_over_m = BOLTZMANN * g.temperature / mass
    grav = GRAVITY_VECTOR if gravity else np.zeros(3)

    noise = None
    if gamma > 0.0 and g.temperature > 0.0:
        noise = rng.standard_normal((1, 6))
    pos, vel = _free_transition(
        s.position[None, :], s.velocity[None, :],
        gamma, np.array([dt]), kt_over_m, grav, noise,
    )
    return KineticState(pos[0], vel[0], s.time + dt)


# ---------------------------------------------------------------------------
# Full-trajectory engine
# ---------------------------------------------------------------------------

_NOISE_BLOCK = 240  # multiple of 6; per-event buffered standard normals

# The Langevin region is where a standing-wave site is deep enough to hold a
# thermal particle through the capture criterion; shallower fringes cannot
# sustain a hold and perturb transport negligibly compared with drag and
# gravity, so exact free flight is used there.
_SITE_DEPTH_MIN_KT = 1.5
_RELEASE_HYSTERESIS = 2.0  # leave the region at half the entry depth
_CORE_WAISTS = 1.5  # free steps guard against jumping into this radius


class _NoiseBlocks:
    """Buffered per-event standard normals preserving each stream's order."""

    def __init__(self, gens: Sequence[np.random.Generator], block: int = _NOISE_BLOCK):
        self.gens = gens
        self.block = block
        n = len(gens)
        self.buf = np.empty((n, block), dtype=float)
        self.cursor = np.full(n, block, dtype=np.int64)

    def take(self, idx: np.ndarray, count: int) -> np.ndarray:
        refill = idx[self.cursor[idx] + count > self.block]
        for e in refill:
            keep = self.block - self.cursor[e]
            if keep:
                self.buf[e, :keep] = self.buf[e, self.cursor[e]:]
            self.buf[e, keep:] = self.gens[e].standard_normal(self.block - keep)
            self.cursor[e] = 0
        base = idx * self.block + self.cursor[idx]
        flat = self.buf.reshape(-1)
        out = flat[base[:, None] + np.arange(count)[None, :]]
        self.cursor[idx] += count
        return out


class _TrapGeometry:
    """Precomputed trap quantities used every engine round."""

    def __init__(self, trap: TrapConfig, particle: Particle, gas: GasEnvironment):
        self.trap = trap
        self.center = np.asarray(trap.center)
        self.axis = np.asarray(trap.axis)
        self.w0 = trap.waist
        self.zr = trap.rayleigh_range
        self.half_fringe = trap.wavelength / 2.0
        self.depth = trap_depth(trap, particle)
        self.active = trap.total_power > 0.0
        if self.active:
            omega_axial, _, _ = trap_frequencies(trap, particle)
            self.dt_ceiling = 2.0 * math.pi / omega_axial / 20.0
            kt = BOLTZMANN * gas.temperature
            self.env_min = min(0.5, _SITE_DEPTH_MIN_KT * kt / self.depth)
            self.env_release = self.env_min / _RELEASE_HYSTERESIS
            # on-axis extent of the Langevin region (envelope >= env_min)
            self.z_env = self.zr * math.sqrt(max(1.0 / self.env_min - 1.0, 0.0))
        else:
            self.dt_ceiling = math.inf
            self.env_min = 1.0
            self.env_release = 1.0
            self.z_env = 0.0

    def site_axial(self, z: np.ndarray) -> np.ndarray:
        return np.rint(z / self.half_fringe)

    def site_envelope(self, site: np.ndarray) -> np.ndarray:
        z_site = site * self.half_fringe
        return 1.0 / (1.0 + (z_site / self.zr) ** 2)


def propagate_batch(
    positions: np.ndarray,
    velocities: np.ndarray,
    p: Particle,
    g: GasEnvironment,
    trap: TrapConfig,
    cfg: PropagationConfig,
    gens: Sequence[np.random.Generator],
    gravity: bool = True,
    record_trace: bool = False,
    trace_decimation: int = 100,
) -> list[TrajectoryOutcome]:
    """Propagate independent launch events to their outcomes.

    Every event owns one generator from `gens` and consumes noise only from
    it, so each outcome is a pure function of its initial state and
    generator regardless of how events are batched or scheduled.

    Where the standing-wave sites are deep enough to matter (local envelope
    above ~1.5 kT worth of well depth, inside the far-field sphere) the
    particle takes Langevin steps whose length adapts between
    `cfg.dt_fine` and a twentieth of the local oscillation period while
    keeping the fringes resolved at the current speed. Everywhere else the
    fringes are too shallow to hold anything and the exact free-flight
    transition jumps as far as the geometry allows.

    Trace recording is supported for single-event batches only.
    """
    n = len(gens)
    pos = np.array(positions, dtype=float).reshape(n, 3)
    vel = np.array(velocities, dtype=float).reshape(n, 3)
    if record_trace and n != 1:
        raise ValueError("trace recording supports single-event batches only")

    mass = particle_mass(p)
    gamma = damping_rate(p, g)
    kt_over_m = BOLTZMANN * g.temperature / mass
    diffusion = kt_over_m / gamma if gamma > 0 else 0.0
    have_noise = gamma > 0.0 and g.temperature > 0.0
    grav = GRAVITY_VECTOR if gravity else np.zeros(3)
    g_mag = float(np.linalg.norm(grav))

    geom = _TrapGeometry(trap, p, g)
    if geom.active and cfg.dt_fine > geom.dt_ceiling:
        raise ConfigurationError(
            f"dt_fine={cfg.dt_fine:g}s resolves fewer than 20 steps per "
            f"axial trap period ({geom.dt_ceiling * 20:g}s)"
        )
    r_far = cfg.far_field_radius * geom.w0
    r_cap = cfg.capture_radius * geom.w0
    fringe_dt_scale = trap.wavelength / 4.0 / 20.0

    # position noise per near step stays below a fraction of the waist so a
    # coarsened step cannot jump across the envelope; same two-regime bound
    # as the free-flight controller
    if have_noise:
        guard_target2 = (geom.w0 / 12.0) ** 2
        near_noise_guard = max(
            (guard_target2 * 3.0 / (2.0 * kt_over_m * gamma)) ** (1.0 / 3.0),
            guard_target2 * gamma / (2.0 * kt_over_m),
        )
    else:
        near_noise_guard = math.inf

    t = np.zeros(n)
    # escape box scales with the launch distance, floored at the far-field
    # sphere so events starting near the trap keep a sane boundary
    launch_dist = np.maximum(
        np.linalg.norm(pos - geom.center, axis=1), cfg.far_field_radius * geom.w0
    )
    below_limit = launch_dist.copy()
    lateral_limit = 10.0 * launch_dist

    alive = np.ones(n, dtype=bool)
    holding = np.zeros(n, dtype=bool)
    hold_site = np.zeros(n, dtype=np.int64)
    hold_elapsed = np.zeros(n)
    arrival = np.full(n, np.nan)
    force_cache = np.zeros((n, 3))
    was_near = np.zeros(n, dtype=bool)
    outcomes: list[Optional[TrajectoryOutcome]] = [None] * n

    blocks = _NoiseBlocks(gens) if have_noise else None

    trace_rows: list[np.ndarray] = []
    trace_count = 0
    if record_trace:
        trace_rows.append(np.concatenate(([0.0], pos[0], vel[0])))

    def fields_at(q: np.ndarray):
        return potential_and_force(trap, p, q)

    def finalize(e: int, kind: OutcomeKind, capture_time=None, site=None):
        frac = None
        if site is not None:
            frac = float(geom.site_envelope(np.array([site]))[0])
        outcomes[e] = TrajectoryOutcome(
            kind=kind,
            capture_time=capture_time,
            site_index=int(site) if site is not None else None,
            site_intensity_fraction=frac,
            arrival_time=None if math.isnan(arrival[e]) else float(arrival[e]),
        )
        alive[e] = False

    def geometry(indices: np.ndarray):
        """Distance to center, beam-radial / axial offsets, local beam radius
        and normalized intensity envelope."""
        rel = pos[indices] - geom.center
        z_ax = rel @ geom.axis
        dist2 = np.einsum("ij,ij->i", rel, rel)
        rho = np.sqrt(np.maximum(dist2 - z_ax * z_ax, 0.0))
        one_s2 = 1.0 + (z_ax / geom.zr) ** 2
        w_z = geom.w0 * np.sqrt(one_s2)
        env = np.exp(-2.0 * (rho / w_z) ** 2) / one_s2
        return np.sqrt(dist2), rho, z_ax, w_z, env

    def in_interaction_region(indices: np.ndarray) -> np.ndarray:
        if not geom.active:
            return np.zeros(indices.size, dtype=bool)
        dist, _, _, _, env = geometry(indices)
        return (dist < r_far) & (env >= geom.env_min)

    def expire(indices: np.ndarray) -> np.ndarray:
        hit = indices[t[indices] >= cfg.t_max * (1.0 - 1e-15)]
        for e in hit:
            finalize(e, OutcomeKind.TIMED_OUT)
        return hit

    phase_near = np.zeros(n, dtype=bool)
    first = np.nonzero(alive)[0]
    phase_near[first] = in_interaction_region(first)

    # Events are independent, so they need not share a clock: all free-phase
    # events are swept until they enter the interaction region or finish,
    # then all waiting near-phase events advance together in lockstep
    # bursts. This keeps the vectorized batches full in both phases without
    # changing any event's own step or noise sequence.
    while np.any(alive):

        # ----- free-flight sweep -----
        while True:
            fidx = np.nonzero(alive & ~phase_near)[0]
            if fidx.size == 0:
                break
            expire(fidx)
            fidx = fidx[alive[fidx]]
            if fidx.size == 0:
                break

            dist, rho, z_ax, w_z, _ = geometry(fidx)
            if geom.active:
                # lower bound on the distance to the Langevin region, which
                # sits inside {rho <= 1.5 w(z)} intersect {|z| <= z_env}
                gap = np.maximum(rho - _CORE_WAISTS * w_z, np.abs(z_ax) - geom.z_env)
            else:
                gap = np.full(fidx.size, math.inf)
            length = np.maximum(gap, geom.w0)

            speed = np.linalg.norm(vel[fidx], axis=1)
            finite = np.isfinite(length)
            dt_free = np.full(fidx.size, math.inf)
            if np.any(finite):
                lf = length[finite]
                sf = speed[finite]
                # drift bound: the ballistic |v| dt + g dt^2 / 2 and the
                # drag-capped |v|/Gamma + g dt / Gamma both overestimate the
                # true mean displacement, so the larger admissible step is
                # still safe
                if g_mag > 0:
                    dt_ballistic = (-sf + np.sqrt(sf * sf + g_mag * lf)) / g_mag
                    if gamma > 0:
                        dt_damped = np.maximum(gamma * lf / 2.0 - sf, 0.0) / g_mag
                        dt_free[finite] = np.maximum(dt_ballistic, dt_damped)
                    else:
                        dt_free[finite] = dt_ballistic
                else:
                    with np.errstate(divide="ignore"):
                        dt_ballistic = np.where(sf > 0, lf / (2.0 * sf), math.inf)
                    if gamma > 0:
                        dt_free[finite] = np.where(
                            sf <= 0.45 * gamma * lf, math.inf, dt_ballistic
                        )
                    else:
                        dt_free[finite] = dt_ballistic
                if have_noise:
                    # keep 3 sigma of OU position noise below a quarter of
                    # the gap; the ballistic-regime variance bound
                    # (2/3) kT/M Gamma dt^3 and the diffusive bound 2 D dt
                    # each overestimate in their own regime, so the larger
                    # admissible step remains conservative
                    target2 = (lf / 12.0) ** 2
                    dt_short = np.cbrt(target2 * 3.0 / (2.0 * kt_over_m * gamma))
                    dt_long = target2 * gamma / (2.0 * kt_over_m)
                    dt_free[finite] = np.minimum(
                        dt_free[finite], np.maximum(dt_short, dt_long)
                    )
            dt_free = np.minimum(dt_free, cfg.t_max - t[fidx])
            dt_free = np.maximum(dt_free, 1e-12)

            noise = blocks.take(fidx, 6) if have_noise else None
            prev_rel = pos[fidx] - geom.center
            q, v = _free_transition(
                pos[fidx], vel[fidx], gamma, dt_free, kt_over_m, grav, noise
            )
            pos[fidx] = q
            vel[fidx] = v
            t[fidx] += dt_free

            # first entry into the far-field sphere: solve |p0 + tau u| = R
            # along this step's straight segment (handles pass-through)
            pending = np.isnan(arrival[fidx]) & (dist >= r_far)
            if np.any(pending):
                p0 = prev_rel[pending]
                seg = (q - geom.center)[pending] - p0
                a = np.einsum("ij,ij->i", seg, seg)
                b = 2.0 * np.einsum("ij,ij->i", p0, seg)
                c = np.einsum("ij,ij->i", p0, p0) - r_far * r_far
                disc = b * b - 4.0 * a * c
                ok = (disc >= 0.0) & (a > 0.0)
                sq = np.sqrt(np.maximum(disc, 0.0))
                with np.errstate(divide="ignore", invalid="ignore"):
                    tau = np.where(ok, (-b - sq) / (2.0 * a), np.inf)
                hit = ok & (tau >= 0.0) & (tau <= 1.0)
                if np.any(hit):
                    sel = fidx[pending][hit]
                    arrival[sel] = t[sel] - dt_free[pending][hit] * (1.0 - tau[hit])

            holding[fidx] = False
            hold_elapsed[fidx] = 0.0

            if record_trace and alive[0] and not phase_near[0]:
                trace_count += 1
                if trace_count % trace_decimation == 0:
                    trace_rows.append(np.concatenate(([t[0]], pos[0], vel[0])))

            # escape box: deep below, or far to the side / above
            rel_l = pos[fidx] - geom.center
            escaped = (
                (-rel_l[:, 1] > below_limit[fidx])
                | (np.abs(rel_l[:, 0]) > lateral_limit[fidx])
                | (np.abs(rel_l[:, 2]) > lateral_limit[fidx])
                | (rel_l[:, 1] > lateral_limit[fidx])
            )
            for e in fidx[escaped]:
                finalize(e, OutcomeKind.ESCAPED)

            still = fidx[alive[fidx]]
            if still.size:
                entered = in_interaction_region(still)
                phase_near[still[entered]] = True

        # ----- Langevin sweep through the interaction region -----
        nidx = np.nonzero(alive & phase_near)[0]
        if nidx.size == 0:
            continue
        expire(nidx)
        nidx = nidx[alive[nidx]]
        if nidx.size == 0:
            continue

        entering = ~was_near[nidx]
        if np.any(entering):
            ent = nidx[entering]
            _, f_ent = fields_at(pos[ent])
            force_cache[ent] = f_ent
        was_near[nidx] = True

        q = pos[nidx]
        v = vel[nidx]
        f_cur = force_cache[nidx]
        t_loc = t[nidx]
        h = holding[nidx]
        hs = hold_site[nidx]
        he = hold_elapsed[nidx]
        live = np.ones(nidx.size, dtype=bool)
        finished_hold = np.zeros(nidx.size, dtype=bool)

        # one burst per outer iteration keeps the whole waiting cohort in
        # lockstep; long crossings simply span several outer iterations
        act = np.nonzero(live)[0]
        for _ in range(32):
            if act.size == 0:
                break
            speed = np.sqrt(np.einsum("ij,ij->i", v[act], v[act]))
            # the local curvature scales with the intensity envelope, so
            # in the weak outer region the stable step grows as
            # 1/sqrt(envelope), capped at 32 periods' worth
            rel_e = q[act] - geom.center
            z_e = rel_e @ geom.axis
            one_s2 = 1.0 + (z_e / geom.zr) ** 2
            rho2_e = np.maximum(
                np.einsum("ij,ij->i", rel_e, rel_e) - z_e * z_e, 0.0
            )
            env = np.exp(-2.0 * rho2_e / (geom.w0**2 * one_s2)) / one_s2
            dt_env = geom.dt_ceiling / np.sqrt(np.maximum(env, 1.0 / 1024.0))
            dt = np.minimum(
                dt_env,
                np.maximum(cfg.dt_fine, fringe_dt_scale / np.maximum(speed, 1e-30)),
            )
            if have_noise:
                dt = np.minimum(dt, near_noise_guard)
            dt = np.minimum(dt, np.maximum(cfg.t_max - t_loc[act], 1e-15))

            decay, sigma = _ou_coefficients(gamma, dt, kt_over_m)
            noise = blocks.take(nidx[act], 3) if have_noise else None

            dtc = dt[:, None]
            half = 0.5 * dtc
            va = v[act] + half * (f_cur[act] / mass + grav)
            qa = q[act] + va * half
            if noise is None:
                va = va * decay[:, None]
            else:
                va = va * decay[:, None] + sigma[:, None] * noise
            qa = qa + va * half
            u_new, f_new = fields_at(qa)
            va = va + half * (f_new / mass + grav)

            q[act] = qa
            v[act] = va
            f_cur[act] = f_new
            t_loc[act] += dt

            # bound when total mechanical energy sits below the local
            # escape level (the optical potential vanishes at the nodes
            # and radially), gravity referenced to the site plane
            z_n = (qa - geom.center) @ geom.axis
            site = geom.site_axial(z_n)
            z_site = site * geom.half_fringe
            site_pos = geom.center[None, :] + z_site[:, None] * geom.axis[None, :]
            grav_rel = -mass * ((qa - site_pos) @ grav)
            kinetic = 0.5 * mass * np.einsum("ij,ij->i", va, va)
            negative = kinetic + u_new + grav_rel < 0.0

            ha = h[act]
            if np.any(negative) or np.any(ha):
                hsa = hs[act]
                hea = he[act]
                held_pos = (
                    geom.center[None, :]
                    + (hsa * geom.half_fringe)[:, None].astype(float)
                    * geom.axis[None, :]
                )
                diff = qa - held_pos
                within = np.einsum("ij,ij->i", diff, diff) < r_cap * r_cap

                cont = ha & negative & within
                start = negative & ~cont
                hea = np.where(cont, hea + dt, np.where(start, dt, 0.0))
                hsa = np.where(cont, hsa, site.astype(np.int64))
                h[act] = cont | start
                hs[act] = hsa
                he[act] = hea
                done = (cont | start) & (hea >= cfg.capture_hold_time)
            else:
                done = negative

            expired_loc = t_loc[act] >= cfg.t_max * (1.0 - 1e-15)
            stop = done | expired_loc
            if np.any(stop):
                finished_hold[act[done]] = True
                live[act[stop]] = False
                act = act[~stop]

            if record_trace:
                trace_count += 1
                if trace_count % trace_decimation == 0:
                    trace_rows.append(np.concatenate(([t_loc[0]], q[0], v[0])))

        # burst boundary: release events that drifted well clear of the
        # Langevin region (half the entry depth, so boundary hoverers are
        # not shuttled between phases every few steps)
        act = np.nonzero(live)[0]
        if act.size:
            rel_b = q[act] - geom.center
            z_b = rel_b @ geom.axis
            d2 = np.einsum("ij,ij->i", rel_b, rel_b)
            rho2_b = np.maximum(d2 - z_b * z_b, 0.0)
            one_s2_b = 1.0 + (z_b / geom.zr) ** 2
            env_b = np.exp(-2.0 * rho2_b / (geom.w0**2 * one_s2_b)) / one_s2_b
            outside = (np.sqrt(d2) >= r_far) | (env_b < geom.env_release)
            if np.any(outside):
                live[act[outside]] = False

        pos[nidx] = q
        vel[nidx] = v
        force_cache[nidx] = f_cur
        t[nidx] = t_loc
        holding[nidx] = h
        hold_site[nidx] = hs
        hold_elapsed[nidx] = he

        for j in np.nonzero(finished_hold)[0]:
            e = nidx[j]
            finalize(
                e, OutcomeKind.TRAPPED,
                capture_time=float(t[e]),
                site=int(hold_site[e]),
            )

        alive_loc = alive[nidx]
        stay = live & alive_loc
        phase_near[nidx] = stay
        drop = alive_loc & ~live
        was_near[nidx[drop]] = False

    if record_trace:
        trace_rows.append(np.concatenate(([t[0]], pos[0], vel[0])))
        outcomes[0].trace = np.vstack(trace_rows)
    return outcomes  # type: ignore[return-value]


def propagate_trajectory(
    init: KineticState,
    p: Particle,
    g: GasEnvironment,
    t: TrapConfig,
    cfg: PropagationConfig,
    rng: Optional[np.random.Generator] = None,
    gravity: bool = True,
    record_trace: bool = False,
    trace_decimation: int = 100,
) -> TrajectoryOutcome:
    """Propagate one launch event to Trapped, Escaped or TimedOut.

    Capture is declared when the total energy relative to the nearest
    antinode stays negative, within `capture_radius` waists of that antinode,
    for `capture_hold_time` of uninterrupted simulated time. Escape is a
    bounding-box exit (further below the trap than the launch distance, or
    ten launch distances sideways or up); anything else times out at t_max.
    """
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(cfg.rng_seed))
    return propagate_batch(
        init.position[None, :],
        init.velocity[None, :],
        p,
        g,
        t,
        cfg,
        [rng],
        gravity=gravity,
        record_trace=record_trace,
        trace_decimation=trace_decimation,
    )[0]
