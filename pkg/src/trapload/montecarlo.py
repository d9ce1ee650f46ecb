"""Ensemble machinery: launch sampling, reproducible event simulation,
parameter sweeps and multi-particle shot statistics.

Reproducibility contract: every launch event derives its own generator from
a 64-bit hash mix of (master seed, parameter index, event index), and all of
its randomness (launch draw plus trajectory noise) comes from that stream.
Outcomes are therefore pure functions of the configuration and the event
index, and sweep results are byte-identical for any worker count or
scheduling order.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .analysis import wilson_interval
from .constants import MBAR
from .dynamics import (
    KineticState,
    OutcomeKind,
    PropagationConfig,
    TrajectoryOutcome,
    propagate_batch,
)
from .physics import GasEnvironment, Particle, TrapConfig

__all__ = [
    "LaunchKind",
    "LaunchDistribution",
    "SimConfig",
    "SweepParameter",
    "SweepSpec",
    "SweepPoint",
    "SweepResult",
    "ShotModel",
    "SiteSignalHistogram",
    "derive_event_seed",
    "event_generator",
    "sample_launch",
    "simulate_launch_event",
    "run_events",
    "run_sweep",
    "shot_outcome_statistics",
    "capture_site_signal",
]


# ---------------------------------------------------------------------------
# seeding
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """One step of the splitmix64 mixer (public-domain constants)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_event_seed(master_seed: int, param_index: int, event_index: int) -> int:
    """Fixed 64-bit hash mix of (master seed, parameter index, event index)."""
    h = _splitmix64(master_seed & _MASK64)
    h = _splitmix64(h ^ (param_index & _MASK64))
    h = _splitmix64(h ^ (event_index & _MASK64))
    return h


def event_generator(master_seed: int, param_index: int, event_index: int):
    return np.random.Generator(
        np.random.PCG64(derive_event_seed(master_seed, param_index, event_index))
    )


# ---------------------------------------------------------------------------
# launch distribution
# ---------------------------------------------------------------------------


class LaunchKind(Enum):
    DELTA = "delta"
    LOGNORMAL = "lognormal"
    GAMMA = "gamma"
    EMPIRICAL = "empirical"


@dataclass(frozen=True)
class LaunchDistribution:
    """Speed distribution and direction of desorbed particles.

    The default direction is straight down; `transverse_spread` opens a
    uniform solid-angle cone of the given half-angle around it. Empirical
    histograms draw the center of a weight-chosen bin, so a single bin is
    equivalent to a delta at its center.
    """

    kind: LaunchKind
    speed: float = 0.0                     # delta
    median: float = 0.0                    # lognormal
    geometric_sigma: float = 1.0           # lognormal
    shape: float = 1.0                     # gamma
    scale: float = 1.0                     # gamma
    bin_edges: tuple = ()                  # empirical
    weights: tuple = ()                    # empirical
    direction: tuple = (0.0, -1.0, 0.0)
    transverse_spread: float = 0.0         # cone half-angle, rad

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        norm = float(np.linalg.norm(d))
        if norm == 0.0:
            raise ValueError("launch direction must be nonzero")
        object.__setattr__(self, "direction", tuple(d / norm))
        if not 0.0 <= self.transverse_spread < math.pi / 2.0:
            raise ValueError("transverse spread must lie in [0, pi/2)")
        if self.kind is LaunchKind.DELTA and self.speed < 0:
            raise ValueError("launch speed must be >= 0")
        if self.kind is LaunchKind.LOGNORMAL:
            if not self.median > 0 or not self.geometric_sigma >= 1.0:
                raise ValueError("lognormal needs median > 0, geometric sigma >= 1")
        if self.kind is LaunchKind.GAMMA:
            if not (self.shape > 0 and self.scale > 0):
                raise ValueError("gamma needs positive shape and scale")
        if self.kind is LaunchKind.EMPIRICAL:
            edges = np.asarray(self.bin_edges, dtype=float)
            w = np.asarray(self.weights, dtype=float)
            if edges.size != w.size + 1 or w.size == 0:
                raise ValueError("empirical needs len(bin_edges) = len(weights) + 1")
            if np.any(np.diff(edges) <= 0) or np.any(edges < 0):
                raise ValueError("empirical bin edges must be nonnegative, increasing")
            if np.any(w < 0) or w.sum() <= 0:
                raise ValueError("empirical weights must be nonnegative, normalizable")

    @classmethod
    def delta(cls, speed: float, **kw) -> "LaunchDistribution":
        return cls(kind=LaunchKind.DELTA, speed=speed, **kw)

    @classmethod
    def lognormal(cls, median: float, geometric_sigma: float, **kw) -> "LaunchDistribution":
        return cls(
            kind=LaunchKind.LOGNORMAL, median=median, geometric_sigma=geometric_sigma, **kw
        )

    @classmethod
    def gamma_speeds(cls, shape: float, scale: float, **kw) -> "LaunchDistribution":
        return cls(kind=LaunchKind.GAMMA, shape=shape, scale=scale, **kw)

    @classmethod
    def empirical(cls, bin_edges, weights, **kw) -> "LaunchDistribution":
        return cls(
            kind=LaunchKind.EMPIRICAL,
            bin_edges=tuple(float(e) for e in bin_edges),
            weights=tuple(float(w) for w in weights),
            **kw,
        )

    def sample_speed(self, rng: np.random.Generator) -> float:
        if self.kind is LaunchKind.DELTA:
            return self.speed
        if self.kind is LaunchKind.LOGNORMAL:
            return self.median * math.exp(
                math.log(self.geometric_sigma) * rng.standard_normal()
            )
        if self.kind is LaunchKind.GAMMA:
            return float(rng.gamma(self.shape, self.scale))
        edges = np.asarray(self.bin_edges)
        w = np.asarray(self.weights, dtype=float)
        idx = rng.choice(w.size, p=w / w.sum())
        return float(0.5 * (edges[idx] + edges[idx + 1]))

    def sample_direction(self, rng: np.random.Generator) -> np.ndarray:
        d = np.asarray(self.direction)
        if self.transverse_spread == 0.0:
            return d.copy()
        # uniform over the spherical cap of half-angle `transverse_spread`
        cos_min = math.cos(self.transverse_spread)
        cos_t = cos_min + (1.0 - cos_min) * rng.random()
        sin_t = math.sqrt(max(1.0 - cos_t * cos_t, 0.0))
        phi = 2.0 * math.pi * rng.random()
        # orthonormal frame around d
        helper = np.array([1.0, 0.0, 0.0])
        if abs(d[0]) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        e1 = np.cross(d, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(d, e1)
        return cos_t * d + sin_t * (math.cos(phi) * e1 + math.sin(phi) * e2)


def default_launch() -> LaunchDistribution:
    """Broad lognormal matched to the stopping-distance optimum near 1 mbar
    for an 8 mm drop; not derived from measured data and freely overridable."""
    return LaunchDistribution.lognormal(median=10.0, geometric_sigma=1.6)


# ---------------------------------------------------------------------------
# simulation configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    """Complete description of one launch-and-propagate experiment."""

    particle: Particle = field(default_factory=Particle.silica)
    gas: GasEnvironment = field(default_factory=lambda: GasEnvironment.air(1.0))
    trap: TrapConfig = field(default_factory=TrapConfig)
    launch: LaunchDistribution = field(default_factory=default_launch)
    substrate_distance: float = 8e-3
    propagation: PropagationConfig = field(default_factory=PropagationConfig)

    def __post_init__(self):
        if not self.substrate_distance > 0:
            raise ValueError("substrate distance must be > 0")


def sample_launch(
    d: LaunchDistribution,
    substrate_distance: float,
    rng: np.random.Generator,
    trap_center=(0.0, 0.0, 0.0),
) -> KineticState:
    """Initial state of one launched particle: on the substrate axis above
    the trap center, moving along the (possibly cone-perturbed) direction."""
    speed = d.sample_speed(rng)
    direction = d.sample_direction(rng)
    position = np.asarray(trap_center, dtype=float) + np.array(
        [0.0, substrate_distance, 0.0]
    )
    return KineticState(position, speed * direction, 0.0)


def _propagate_events(
    cfg: SimConfig, master_seed: int, param_index: int, event_indices: Sequence[int]
) -> list[TrajectoryOutcome]:
    """Sample and propagate a batch of events, each on its own stream."""
    gens = [event_generator(master_seed, param_index, e) for e in event_indices]
    n = len(gens)
    pos = np.empty((n, 3))
    vel = np.empty((n, 3))
    for i, rng in enumerate(gens):
        state = sample_launch(
            cfg.launch, cfg.substrate_distance, rng, cfg.trap.center
        )
        pos[i] = state.position
        vel[i] = state.velocity
    return propagate_batch(
        pos, vel, cfg.particle, cfg.gas, cfg.trap, cfg.propagation, gens
    )


def simulate_launch_event(
    cfg: SimConfig, event_index: int, param_index: int = 0
) -> TrajectoryOutcome:
    """Run one launch event; a pure function of (cfg, event_index).

    The per-event generator seed mixes cfg.propagation.rng_seed with the
    parameter and event indices, so repeated calls are bit-identical.
    """
    return _propagate_events(
        cfg, cfg.propagation.rng_seed, param_index, [event_index]
    )[0]


def _chunk_job(args):
    cfg, master_seed, param_index, start, stop = args
    return _propagate_events(cfg, master_seed, param_index, range(start, stop))


def run_events(
    cfg: SimConfig,
    n_events: int,
    master_seed: Optional[int] = None,
    param_index: int = 0,
    workers: int = 1,
    chunk_size: int = 1024,
    deadline: Optional[float] = None,
) -> tuple[list[TrajectoryOutcome], bool]:
    """Simulate `n_events` independent events, in event-index order.

    Returns (outcomes, complete). When a wall-clock `deadline`
    (time.monotonic value) passes, remaining chunks are skipped and
    `complete` is False; finished events are never discarded.
    """
    if master_seed is None:
        master_seed = cfg.propagation.rng_seed
    bounds = list(range(0, n_events, chunk_size)) + [n_events]
    jobs = [
        (cfg, master_seed, param_index, lo, hi)
        for lo, hi in zip(bounds[:-1], bounds[1:])
        if hi > lo
    ]
    outcomes: list[TrajectoryOutcome] = []
    complete = True
    if workers <= 1:
        for job in jobs:
            if deadline is not None and time.monotonic() > deadline and outcomes:
                complete = False
                break
            outcomes.extend(_chunk_job(job))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_chunk_job, job) for job in jobs]
            for fut in futures:
                if deadline is not None and time.monotonic() > deadline and outcomes:
                    complete = False
                    for pending in futures:
                        pending.cancel()
                    break
                outcomes.extend(fut.result())
    return outcomes, complete


# ---------------------------------------------------------------------------
# parameter sweeps
# ---------------------------------------------------------------------------


class SweepParameter(Enum):
    PRESSURE = "pressure"
    POWER = "power"
    LAUNCH_SPEED = "launch_speed"
    SUBSTRATE_DISTANCE = "substrate_distance"


@dataclass(frozen=True)
class SweepSpec:
    """Grid definition for a capture-probability sweep.

    Grid values are SI (Pa, W, m/s, m). The launch-speed sweep replaces the
    configured distribution with a delta at each grid value.
    """

    parameter: SweepParameter
    grid: tuple
    events_per_point: int
    base_config: SimConfig
    master_seed: int = 2026

    def __post_init__(self):
        g = tuple(float(v) for v in self.grid)
        if len(g) == 0:
            raise ValueError("grid must be non-empty")
        diffs = np.diff(g)
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError("grid must be strictly monotone")
        if self.events_per_point < 1:
            raise ValueError("events_per_point must be >= 1")
        object.__setattr__(self, "grid", g)


@dataclass
class SweepPoint:
    value: float
    n: int
    trapped: int
    probability: float
    ci_lo: float
    ci_hi: float
    mean_capture_time: Optional[float]
    timeouts: int
    incomplete: bool = False
    outcomes: Optional[list] = field(default=None, repr=False)


@dataclass
class SweepResult:
    parameter: str
    points: list[SweepPoint]
    master_seed: int
    config_snapshot: dict

    def to_json(self) -> str:
        doc = {
            "schema_version": 1,
            "parameter": self.parameter,
            "seed": self.master_seed,
            "config": self.config_snapshot,
            "points": [
                {
                    "value": p.value,
                    "n": p.n,
                    "trapped": p.trapped,
                    "p": p.probability,
                    "ci_lo": p.ci_lo,
                    "ci_hi": p.ci_hi,
                    "mean_capture_time_s": p.mean_capture_time,
                    "timeouts": p.timeouts,
                    "incomplete": p.incomplete,
                }
                for p in self.points
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    CSV_HEADER = "value,n,trapped,p,ci_lo,ci_hi,mean_capture_time_s,timeouts"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for p in self.points:
            mean_ct = "" if p.mean_capture_time is None else repr(p.mean_capture_time)
            lines.append(
                f"{p.value!r},{p.n},{p.trapped},{p.probability!r},"
                f"{p.ci_lo!r},{p.ci_hi!r},{mean_ct},{p.timeouts}"
            )
        return "\n".join(lines) + "\n"


def apply_parameter(cfg: SimConfig, parameter: SweepParameter, value: float) -> SimConfig:
    if parameter is SweepParameter.PRESSURE:
        return replace(cfg, gas=replace(cfg.gas, pressure=value))
    if parameter is SweepParameter.POWER:
        return replace(cfg, trap=replace(cfg.trap, total_power=value))
    if parameter is SweepParameter.LAUNCH_SPEED:
        return replace(
            cfg,
            launch=LaunchDistribution.delta(
                value,
                direction=cfg.launch.direction,
                transverse_spread=cfg.launch.transverse_spread,
            ),
        )
    if parameter is SweepParameter.SUBSTRATE_DISTANCE:
        return replace(cfg, substrate_distance=value)
    raise ValueError(f"unknown sweep parameter {parameter}")


def config_snapshot(cfg: SimConfig) -> dict:
    """JSON-ready description of a simulation configuration."""
    return {
        "particle": {
            "radius_m": cfg.particle.radius,
            "density_kg_m3": cfg.particle.density,
            "refractive_index": cfg.particle.refractive_index,
        },
        "gas": {
            "pressure_mbar": cfg.gas.pressure / MBAR,
            "temperature_k": cfg.gas.temperature,
            "molecular_mass_kg": cfg.gas.molecular_mass,
            "viscosity_pa_s": cfg.gas.viscosity_ref,
        },
        "trap": {
            "wavelength_m": cfg.trap.wavelength,
            "waist_m": cfg.trap.waist,
            "power_w": cfg.trap.total_power,
        },
        "launch": {
            "kind": cfg.launch.kind.value,
            "speed_m_s": cfg.launch.speed,
            "median_m_s": cfg.launch.median,
            "geometric_sigma": cfg.launch.geometric_sigma,
            "shape": cfg.launch.shape,
            "scale_m_s": cfg.launch.scale,
            "direction": list(cfg.launch.direction),
            "spread_rad": cfg.launch.transverse_spread,
            "distance_m": cfg.substrate_distance,
        },
        "sim": {
            "dt_fine_s": cfg.propagation.dt_fine,
            "t_max_s": cfg.propagation.t_max,
            "capture_hold_s": cfg.propagation.capture_hold_time,
            "capture_radius_w0": cfg.propagation.capture_radius,
            "far_field_radius_w0": cfg.propagation.far_field_radius,
        },
    }


def run_sweep(
    spec: SweepSpec,
    workers: int = 1,
    wall_clock_cap_s: Optional[float] = None,
    collect_outcomes: bool = False,
    progress=None,
) -> SweepResult:
    """Run every grid point and tally outcomes with 95% Wilson intervals.

    Results are independent of `workers` and of scheduling; a per-point
    wall-clock cap marks a point incomplete (with however many events
    finished) instead of silently truncating the grid. `progress`, when
    given, is called with (index, value, SweepPoint) after each point.
    """
    points = []
    for k, value in enumerate(spec.grid):
        cfg = apply_parameter(spec.base_config, spec.parameter, value)
        deadline = (
            time.monotonic() + wall_clock_cap_s if wall_clock_cap_s is not None else None
        )
        outcomes, complete = run_events(
            cfg,
            spec.events_per_point,
            master_seed=spec.master_seed,
            param_index=k,
            workers=workers,
            deadline=deadline,
        )
        captures = [
            o.capture_time for o in outcomes if o.kind is OutcomeKind.TRAPPED
        ]
        trapped = len(captures)
        timeouts = sum(1 for o in outcomes if o.kind is OutcomeKind.TIMED_OUT)
        n = len(outcomes)
        lo, hi = wilson_interval(trapped, n, 0.95) if n else (0.0, 1.0)
        point = SweepPoint(
            value=value,
            n=n,
            trapped=trapped,
            probability=trapped / n if n else 0.0,
            ci_lo=lo,
            ci_hi=hi,
            mean_capture_time=(sum(captures) / trapped) if trapped else None,
            timeouts=timeouts,
            incomplete=not complete,
            outcomes=outcomes if collect_outcomes else None,
        )
        points.append(point)
        if progress is not None:
            progress(k, value, point)
    return SweepResult(
        parameter=spec.parameter.value,
        points=points,
        master_seed=spec.master_seed,
        config_snapshot=config_snapshot(spec.base_config),
    )


# ---------------------------------------------------------------------------
# multi-particle shots and capture-site signals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShotModel:
    """Poisson number of launched particles per pulse, each captured
    independently with the same probability."""

    mean_particles_per_shot: float
    per_particle_capture_probability: float

    def __post_init__(self):
        if self.mean_particles_per_shot < 0:
            raise ValueError("mean particles per shot must be >= 0")
        if not 0.0 <= self.per_particle_capture_probability <= 1.0:
            raise ValueError("capture probability must lie in [0, 1]")


def shot_outcome_statistics(m: ShotModel) -> tuple[float, float, float]:
    """(P_none, P_single, P_multiple) per pulse.

    Poisson thinning: with N ~ Poisson(lambda) launches and independent
    capture probability p, the trapped count is Poisson(lambda p).
    """
    mu = m.mean_particles_per_shot * m.per_particle_capture_probability
    p_none = math.exp(-mu)
    p_single = mu * p_none
    return p_none, p_single, 1.0 - p_none - p_single


@dataclass(frozen=True)
class SiteSignalHistogram:
    """Distribution of per-particle signal amplitudes, proportional to the
    intensity envelope of the antinode each particle settled in."""

    bin_edges: np.ndarray
    counts: np.ndarray
    mean: float
    sigma: float
    amplitudes: np.ndarray = field(repr=False)


def capture_site_signal(
    outcomes: Iterable[TrajectoryOutcome], bins: int = 30
) -> SiteSignalHistogram:
    """Histogram of trapped-particle signal amplitudes (central site = 1)."""
    amps = np.asarray(
        [
            o.site_intensity_fraction
            for o in outcomes
            if o.kind is OutcomeKind.TRAPPED and o.site_intensity_fraction is not None
        ],
        dtype=float,
    )
    if amps.size == 0:
        raise ValueError("no trapped outcomes to histogram")
    lo = float(amps.min())
    hi = float(amps.max())
    if hi <= lo:
        lo, hi = lo - 1e-12, hi + 1e-12
    counts, edges = np.histogram(amps, bins=bins, range=(lo, hi))
    return SiteSignalHistogram(
        bin_edges=edges,
        counts=counts,
        mean=float(amps.mean()),
        sigma=float(amps.std()),
        amplitudes=amps,
    )
