"""trapload: Monte Carlo loading of nanoparticles into a standing-wave optical trap.

Library layout:

* :mod:`trapload.physics` - closed-form quantities (mass, drag, trap fields)
* :mod:`trapload.dynamics` - Langevin propagation and capture detection
* :mod:`trapload.montecarlo` - launch sampling, parameter sweeps, shot statistics
* :mod:`trapload.analysis` - Welch PSD, Lorentzian fits, arrival-time inversion
* :mod:`trapload.config` / :mod:`trapload.cli` - file configuration and command line
"""

__version__ = "0.1.0"

from .analysis import (  # noqa: F401
    LorentzianFit,
    PsdEstimate,
    TimeSeries,
    arrival_histogram,
    lorentzian_fit,
    velocity_from_arrival,
    welch_psd,
    wilson_interval,
)
from .dynamics import (  # noqa: F401
    KineticState,
    OutcomeKind,
    PropagationConfig,
    TrajectoryOutcome,
    analytic_drag_position,
    far_field_propagate,
    langevin_step,
    msd_free_diffusion,
    propagate_trajectory,
)
from .montecarlo import (  # noqa: F401
    LaunchDistribution,
    ShotModel,
    SimConfig,
    SweepParameter,
    SweepSpec,
    capture_site_signal,
    run_events,
    run_sweep,
    sample_launch,
    shot_outcome_statistics,
    simulate_launch_event,
)
from .physics import (  # noqa: F401
    FieldSample,
    GasEnvironment,
    Particle,
    TrapConfig,
    damping_rate,
    particle_mass,
    polarizability,
    trap_depth,
    trap_fields,
    trap_force,
    trap_frequencies,
    trap_intensity,
    trap_potential,
)
