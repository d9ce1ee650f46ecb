"""Post-processing of simulated motion and launch ensembles.

Welch spectral estimation, damped-oscillator line fits, arrival-time
histograms and their inversion back to launch speeds, plus the Wilson score
interval used for capture probabilities. All functions are pure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy import optimize, stats

from .dynamics import OutcomeKind, TrajectoryOutcome

__all__ = [
    "TimeSeries",
    "PsdEstimate",
    "LorentzianFit",
    "ArrivalHistogram",
    "welch_psd",
    "lorentzian_fit",
    "arrival_histogram",
    "velocity_from_arrival",
    "wilson_interval",
    "psd_to_csv",
    "fit_report_json",
]


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled scalar signal."""

    sample_rate: float  # Hz
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))
        if not self.sample_rate > 0:
            raise ValueError("sample rate must be > 0")
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise ValueError("need at least two samples")


@dataclass(frozen=True)
class PsdEstimate:
    """One-sided Welch estimate; integral over frequency equals the
    time-domain variance (window-power compensated)."""

    frequencies: np.ndarray
    densities: np.ndarray
    segment_length: int
    overlap_fraction: float
    window: str = "hann"


@dataclass
class LorentzianFit:
    """Damped-oscillator line parameters.

    The model is S(f) = A / ((f0^2 - f^2)^2 + (gamma f)^2) + B, whose full
    width at half maximum is gamma; for a gas-damped oscillator gamma equals
    the momentum damping rate divided by 2 pi.
    """

    center_frequency: float
    linewidth: float
    amplitude: float
    plateau: float
    residual_norm: float
    converged: bool


def welch_psd(
    ts: TimeSeries, segment_length: int, overlap_fraction: float = 0.5
) -> PsdEstimate:
    """Hann-windowed averaged periodogram, one-sided.

    `segment_length` must be a power of two no longer than the series and
    `overlap_fraction` in [0, 1). The mean is not removed, so a constant
    signal shows up at zero frequency.
    """
    n = ts.samples.size
    m = int(segment_length)
    if m < 4 or m & (m - 1):
        raise ValueError("segment_length must be a power of two >= 4")
    if m > n:
        raise ValueError("segment_length exceeds series length")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError("overlap_fraction must be in [0, 1)")

    hop = max(1, int(round(m * (1.0 - overlap_fraction))))
    window = 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(m) / m))
    w_power = float(window @ window)

    acc = np.zeros(m // 2 + 1)
    count = 0
    for start in range(0, n - m + 1, hop):
        seg = ts.samples[start : start + m] * window
        spec = np.fft.rfft(seg)
        acc += (spec.real**2 + spec.imag**2)
        count += 1
    scale = 2.0 / (ts.sample_rate * w_power * count)
    densities = acc * scale
    densities[0] *= 0.5
    if m % 2 == 0:
        densities[-1] *= 0.5
    freqs = np.fft.rfftfreq(m, 1.0 / ts.sample_rate)
    return PsdEstimate(
        frequencies=freqs,
        densities=densities,
        segment_length=m,
        overlap_fraction=overlap_fraction,
    )


def _lorentzian(f, f0, gamma, amp, plateau):
    return amp / ((f0 * f0 - f * f) ** 2 + (gamma * f) ** 2) + plateau


def lorentzian_fit(psd: PsdEstimate, band: tuple[float, float]) -> LorentzianFit:
    """Least-squares damped-oscillator fit over [f_lo, f_hi].

    Residuals are weighted by the data (relative error) so the peak and the
    wings contribute comparably. Initialization comes from the peak bin.
    A flat or featureless band yields converged = False rather than a
    spurious narrow line.
    """
    f_lo, f_hi = band
    mask = (psd.frequencies >= f_lo) & (psd.frequencies <= f_hi)
    f = psd.frequencies[mask]
    y = psd.densities[mask]
    if f.size < 10:
        raise ValueError("band must contain at least 10 bins")
    if np.any(y <= 0):
        floor = np.max(y) * 1e-300 + 1e-300
        y = np.maximum(y, floor)

    i_pk = int(np.argmax(y))
    f_ref = float(f[i_pk]) if f[i_pk] > 0 else float(f[f.size // 2])
    y_ref = float(y[i_pk])

    # fit in normalized variables (frequency in units of the peak bin,
    # density in units of the peak value) so every parameter is order one;
    # raw scales span ~20 decades and break trust-region scaling otherwise
    fs = f / f_ref
    ys = y / y_ref
    plateau_guess = float(np.median(ys))
    above = ys > 0.5 * (ys[i_pk] + plateau_guess)
    width_guess = max(
        float(fs[above].max() - fs[above].min()), float(fs[1] - fs[0])
    )

    def residuals(params):
        c, g, a, b = params
        return (a / ((c * c - fs * fs) ** 2 + (g * fs) ** 2) + b - ys) / ys

    lo_s, hi_s = f_lo / f_ref, f_hi / f_ref
    bounds = (
        [lo_s * 0.5, 1e-15, 0.0, 0.0],
        [hi_s * 2.0, (hi_s - lo_s) * 10.0, np.inf, np.inf],
    )
    c_start = min(max(1.0, bounds[0][0]), bounds[1][0])

    # the residual landscape can hold shallow side minima, so scan a few
    # width initializations and keep the best fit
    result = None
    for width_factor in (1.0, 0.2, 5.0, 0.04):
        g0 = min(max(width_guess * width_factor, 2.0 * bounds[0][1]), bounds[1][1])
        a0 = max(ys[i_pk] - plateau_guess, plateau_guess) * (g0 * c_start) ** 2
        x0 = [c_start, g0, a0, max(plateau_guess, 0.0)]
        trial = optimize.least_squares(
            residuals,
            x0,
            bounds=bounds,
            max_nfev=2000,
            xtol=1e-15,
            ftol=1e-15,
            gtol=1e-15,
        )
        if result is None or trial.cost < result.cost:
            result = trial
    c, g, a, b = result.x
    f0 = c * f_ref
    gamma = g * f_ref
    amp = a * y_ref * f_ref**4
    plateau = b * y_ref
    residual_norm = float(np.sqrt(np.mean(result.fun**2)))

    # a credible line must sit inside the band, be narrower than it, and
    # rise visibly above the plateau
    peak_height = amp / max((gamma * f0) ** 2, 1e-300)
    prominent = peak_height > 0.5 * max(plateau, 1e-300)
    converged = bool(
        result.success
        and f_lo <= f0 <= f_hi
        and 0.0 < gamma < (f_hi - f_lo)
        and prominent
    )
    return LorentzianFit(
        center_frequency=float(f0),
        linewidth=float(gamma),
        amplitude=float(amp),
        plateau=float(plateau),
        residual_norm=residual_norm,
        converged=converged,
    )


@dataclass(frozen=True)
class ArrivalHistogram:
    """Binned first-arrival (or capture) times of an outcome collection."""

    bin_edges: np.ndarray
    counts: np.ndarray
    times: np.ndarray = field(repr=False)
    substrate_distance: float = 0.0


def arrival_times(outcomes: Iterable[TrajectoryOutcome]) -> np.ndarray:
    """Recorded arrival times (first entry into the far-field sphere),
    falling back to the capture time for trapped events without one."""
    times = []
    for out in outcomes:
        if out.arrival_time is not None:
            times.append(out.arrival_time)
        elif out.kind is OutcomeKind.TRAPPED and out.capture_time is not None:
            times.append(out.capture_time)
    return np.asarray(times, dtype=float)


def arrival_histogram(
    outcomes: Iterable[TrajectoryOutcome],
    substrate_distance: float,
    bin_width: Optional[float] = None,
    bins: int = 40,
) -> ArrivalHistogram:
    """Histogram of transit times to the trap region.

    `bin_width` (seconds) overrides the automatic `bins` split of the full
    observed range. Raises on an empty collection.
    """
    times = arrival_times(outcomes)
    if times.size == 0:
        raise ValueError("no outcomes with a recorded arrival or capture time")
    lo, hi = float(times.min()), float(times.max())
    if hi <= lo:
        hi = lo + max(abs(lo) * 1e-9, 1e-12)
    if bin_width is not None:
        if not bin_width > 0:
            raise ValueError("bin width must be > 0")
        edges = np.arange(lo, hi + bin_width, bin_width)
        if edges.size < 2:
            edges = np.array([lo, lo + bin_width])
    else:
        edges = np.linspace(lo, hi, bins + 1)
    counts, edges = np.histogram(times, bins=edges)
    return ArrivalHistogram(
        bin_edges=edges,
        counts=counts,
        times=times,
        substrate_distance=substrate_distance,
    )


def velocity_from_arrival(arrival_time: float, substrate_distance: float) -> float:
    """Launch-speed estimate d / t from a transit time.

    Valid in the collisionless regime, where the particle keeps its launch
    velocity over the whole flight; at higher pressures drag makes this an
    underestimate. Gravity is neglected, consistent with millisecond
    transits of fast particles.
    """
    if not arrival_time > 0:
        raise ValueError("arrival time must be > 0")
    return substrate_distance / arrival_time


def wilson_interval(
    successes: int, trials: int, confidence: float = 0.95
) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("need at least one trial")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    p_hat = successes / trials
    denom = 1.0 + z * z / trials
    center = (p_hat + z * z / (2.0 * trials)) / denom
    margin = (z / denom) * math.sqrt(
        p_hat * (1.0 - p_hat) / trials + z * z / (4.0 * trials * trials)
    )
    lo = 0.0 if successes == 0 else max(float(center - margin), 0.0)
    hi = 1.0 if successes == trials else min(float(center + margin), 1.0)
    return lo, hi


def psd_to_csv(psd: PsdEstimate, path) -> None:
    """Write `f_hz,psd` rows with a comment header recording the estimator."""
    with open(path, "w") as fh:
        fh.write(
            f"# window={psd.window} segment_length={psd.segment_length} "
            f"overlap={psd.overlap_fraction}\n"
        )
        fh.write("f_hz,psd\n")
        for f, d in zip(psd.frequencies, psd.densities):
            fh.write(f"{float(f)!r},{float(d)!r}\n")


def fit_report_json(fit: LorentzianFit) -> str:
    return json.dumps(
        {
            "f0_hz": fit.center_frequency,
            "linewidth_hz": fit.linewidth,
            "amplitude": fit.amplitude,
            "plateau": fit.plateau,
            "residual": fit.residual_norm,
            "converged": fit.converged,
        },
        indent=2,
        sort_keys=True,
    )
