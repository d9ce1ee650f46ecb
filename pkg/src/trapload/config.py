"""File configuration: INI-style sections in experimentalists' units.

The file format uses mbar, atomic mass units and explicit unit suffixes in
key names; everything is converted to strict SI when building the simulation
configuration. Unknown sections or keys are rejected, and every invariant
violation is reported with its `section.key` path.

Schema (all keys optional; defaults shown by `save_config` of a default
RunConfig)::

    [meta]     schema_version
    [particle] radius_m, density_kg_m3, refractive_index
    [gas]      pressure_mbar, temperature_k, molecular_mass_u, viscosity_pa_s
    [trap]     wavelength_m, waist_m, power_w
    [launch]   distribution (delta|lognormal|gamma|empirical), speed_m_s,
               median_m_s, geometric_sigma, shape, scale_m_s,
               bin_edges_m_s, weights, direction, spread_rad, distance_m
    [sim]      dt_fine_s, t_max_s, capture_hold_s, capture_radius_w0,
               far_field_radius_w0, seed, events
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .constants import ATOMIC_MASS, MBAR
from .dynamics import PropagationConfig
from .montecarlo import LaunchDistribution, SimConfig
from .physics import GasEnvironment, Particle, TrapConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "save_config"]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration file; the message names the offending key."""


@dataclass
class RunConfig:
    """Validated run settings in file units, with SI conversion on demand."""

    radius_m: float = 150e-9
    density_kg_m3: float = 2000.0
    refractive_index: float = 1.44

    pressure_mbar: float = 1.0
    temperature_k: float = 300.0
    molecular_mass_u: float = 28.97
    viscosity_pa_s: float = 1.85e-5

    wavelength_m: float = 1550e-9
    waist_m: float = 6e-6
    power_w: float = 0.2

    distribution: str = "lognormal"
    speed_m_s: float = 10.0
    median_m_s: float = 10.0
    geometric_sigma: float = 1.6
    shape: float = 4.0
    scale_m_s: float = 2.5
    bin_edges_m_s: tuple = ()
    weights: tuple = ()
    direction: tuple = (0.0, -1.0, 0.0)
    spread_rad: float = 0.0
    distance_m: float = 8e-3

    dt_fine_s: float = 2e-9
    t_max_s: float = 10.0
    capture_hold_s: float = 5e-3
    capture_radius_w0: float = 3.0
    far_field_radius_w0: float = 60.0
    seed: int = 2026
    events: int = 1000

    def launch_distribution(self) -> LaunchDistribution:
        common = dict(direction=self.direction, transverse_spread=self.spread_rad)
        if self.distribution == "delta":
            return LaunchDistribution.delta(self.speed_m_s, **common)
        if self.distribution == "lognormal":
            return LaunchDistribution.lognormal(
                self.median_m_s, self.geometric_sigma, **common
            )
        if self.distribution == "gamma":
            return LaunchDistribution.gamma_speeds(self.shape, self.scale_m_s, **common)
        if self.distribution == "empirical":
            return LaunchDistribution.empirical(
                self.bin_edges_m_s, self.weights, **common
            )
        raise ConfigError(
            f"launch.distribution: unknown kind {self.distribution!r}"
        )

    def to_sim_config(self) -> SimConfig:
        """Build the SI simulation configuration, mapping any invariant
        violation to its configuration key path."""
        try:
            particle = Particle(
                radius=self.radius_m,
                density=self.density_kg_m3,
                refractive_index=self.refractive_index,
            )
        except ValueError as err:
            raise ConfigError(f"particle: {err}") from err
        try:
            gas = GasEnvironment(
                pressure=self.pressure_mbar * MBAR,
                temperature=self.temperature_k,
                molecular_mass=self.molecular_mass_u * ATOMIC_MASS,
                viscosity_ref=self.viscosity_pa_s,
            )
        except ValueError as err:
            raise ConfigError(f"gas: {err}") from err
        try:
            trap = TrapConfig(
                wavelength=self.wavelength_m,
                waist=self.waist_m,
                total_power=self.power_w,
            )
        except ValueError as err:
            raise ConfigError(f"trap: {err}") from err
        try:
            launch = self.launch_distribution()
        except ValueError as err:
            raise ConfigError(f"launch: {err}") from err
        try:
            propagation = PropagationConfig(
                dt_fine=self.dt_fine_s,
                t_max=self.t_max_s,
                capture_hold_time=self.capture_hold_s,
                capture_radius=self.capture_radius_w0,
                far_field_radius=self.far_field_radius_w0,
                rng_seed=self.seed,
            )
        except ValueError as err:
            raise ConfigError(f"sim: {err}") from err
        try:
            return SimConfig(
                particle=particle,
                gas=gas,
                trap=trap,
                launch=launch,
                substrate_distance=self.distance_m,
                propagation=propagation,
            )
        except ValueError as err:
            raise ConfigError(f"launch.distance_m: {err}") from err


_FLOAT_KEYS = {
    "particle": ("radius_m", "density_kg_m3", "refractive_index"),
    "gas": ("pressure_mbar", "temperature_k", "molecular_mass_u", "viscosity_pa_s"),
    "trap": ("wavelength_m", "waist_m", "power_w"),
    "launch": (
        "speed_m_s",
        "median_m_s",
        "geometric_sigma",
        "shape",
        "scale_m_s",
        "spread_rad",
        "distance_m",
    ),
    "sim": (
        "dt_fine_s",
        "t_max_s",
        "capture_hold_s",
        "capture_radius_w0",
        "far_field_radius_w0",
    ),
}
_INT_KEYS = {"sim": ("seed", "events")}
_LIST_KEYS = {"launch": ("bin_edges_m_s", "weights", "direction")}
_STR_KEYS = {"launch": ("distribution",)}
_ALL_SECTIONS = ("meta", "particle", "gas", "trap", "launch", "sim")


def _known_keys(section: str):
    keys = set()
    for table in (_FLOAT_KEYS, _INT_KEYS, _LIST_KEYS, _STR_KEYS):
        keys.update(table.get(section, ()))
    if section == "meta":
        keys.add("schema_version")
    return keys


def load_config(path) -> RunConfig:
    """Parse and validate a configuration file; missing keys take defaults."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from err
    except configparser.Error as err:
        raise ConfigError(f"cannot parse config file {path}: {err}") from err

    cfg = RunConfig()
    for section in parser.sections():
        if section not in _ALL_SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        known = _known_keys(section)
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {section}.{key}")
            path_name = f"{section}.{key}"
            if section == "meta":
                if raw.strip() != str(SCHEMA_VERSION):
                    raise ConfigError(
                        f"meta.schema_version: expected {SCHEMA_VERSION}, got {raw!r}"
                    )
                continue
            if key in _FLOAT_KEYS.get(section, ()):
                try:
                    value = float(raw)
                except ValueError as err:
                    raise ConfigError(f"{path_name}: not a number: {raw!r}") from err
                setattr(cfg, key, value)
            elif key in _INT_KEYS.get(section, ()):
                try:
                    value = int(raw)
                except ValueError as err:
                    raise ConfigError(f"{path_name}: not an integer: {raw!r}") from err
                setattr(cfg, key, value)
            elif key in _LIST_KEYS.get(section, ()):
                try:
                    value = tuple(float(v) for v in raw.split(",") if v.strip())
                except ValueError as err:
                    raise ConfigError(
                        f"{path_name}: not a comma-separated number list: {raw!r}"
                    ) from err
                setattr(cfg, key, value)
            else:
                setattr(cfg, key, raw.strip())

    # simple range checks with key paths, before the deeper type invariants
    checks = [
        ("gas.pressure_mbar", cfg.pressure_mbar >= 0),
        ("gas.temperature_k", cfg.temperature_k > 0),
        ("particle.radius_m", cfg.radius_m > 0),
        ("particle.density_kg_m3", cfg.density_kg_m3 > 0),
        ("particle.refractive_index", cfg.refractive_index > 1),
        ("trap.power_w", cfg.power_w >= 0),
        ("trap.waist_m", cfg.waist_m > 0),
        ("trap.wavelength_m", cfg.wavelength_m > 0),
        ("launch.distance_m", cfg.distance_m > 0),
        ("sim.events", cfg.events >= 1),
        ("sim.dt_fine_s", cfg.dt_fine_s > 0),
        ("sim.t_max_s", cfg.t_max_s > 0),
    ]
    for key_path, ok in checks:
        if not ok:
            raise ConfigError(f"{key_path}: value out of range")
    cfg.to_sim_config()  # surface any remaining invariant violation now
    return cfg


def save_config(cfg: RunConfig, path) -> None:
    """Write a config file that round-trips bit-identically through repr."""
    parser = configparser.ConfigParser()
    parser["meta"] = {"schema_version": str(SCHEMA_VERSION)}
    parser["particle"] = {
        "radius_m": repr(cfg.radius_m),
        "density_kg_m3": repr(cfg.density_kg_m3),
        "refractive_index": repr(cfg.refractive_index),
    }
    parser["gas"] = {
        "pressure_mbar": repr(cfg.pressure_mbar),
        "temperature_k": repr(cfg.temperature_k),
        "molecular_mass_u": repr(cfg.molecular_mass_u),
        "viscosity_pa_s": repr(cfg.viscosity_pa_s),
    }
    parser["trap"] = {
        "wavelength_m": repr(cfg.wavelength_m),
        "waist_m": repr(cfg.waist_m),
        "power_w": repr(cfg.power_w),
    }
    launch = {
        "distribution": cfg.distribution,
        "speed_m_s": repr(cfg.speed_m_s),
        "median_m_s": repr(cfg.median_m_s),
        "geometric_sigma": repr(cfg.geometric_sigma),
        "shape": repr(cfg.shape),
        "scale_m_s": repr(cfg.scale_m_s),
        "direction": ",".join(repr(v) for v in cfg.direction),
        "spread_rad": repr(cfg.spread_rad),
        "distance_m": repr(cfg.distance_m),
    }
    if cfg.bin_edges_m_s:
        launch["bin_edges_m_s"] = ",".join(repr(v) for v in cfg.bin_edges_m_s)
        launch["weights"] = ",".join(repr(v) for v in cfg.weights)
    parser["launch"] = launch
    parser["sim"] = {
        "dt_fine_s": repr(cfg.dt_fine_s),
        "t_max_s": repr(cfg.t_max_s),
        "capture_hold_s": repr(cfg.capture_hold_s),
        "capture_radius_w0": repr(cfg.capture_radius_w0),
        "far_field_radius_w0": repr(cfg.far_field_radius_w0),
        "seed": str(cfg.seed),
        "events": str(cfg.events),
    }
    with open(path, "w") as fh:
        parser.write(fh)
