"""Monte Carlo APD click-delay statistics under pulsed OPO pumping.

Click rates are instantaneous rates in s^-1: a delay bin of width ``dt`` ns
receives ``rate * dt * 1e-9`` expected clicks per pump pulse. Rates "per
second" in reports are per second of live measurement time (one pulse every
``1 / rep_rate``); the lock/measure duty cycle is reported separately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import DegenerateModel, EmptyInput
from .signal_core import (
    FilterChain,
    PulseProfile,
    SampledSignal,
    filter_signal,
    sample_pulse,
)

LEAKAGE_MODES = ("intensity", "field")


@dataclass(frozen=True)
class ExperimentTiming:
    rep_rate: float = 50e3          # Hz
    measure_window: float = 500.0   # ns
    duty_measure: float = 0.2       # s
    duty_lock: float = 0.8          # s

    def __post_init__(self):
        if not self.rep_rate > 0:
            raise ValueError(f"rep_rate must be > 0, got {self.rep_rate}")
        if not self.measure_window > 0:
            raise ValueError(f"measure_window must be > 0, got {self.measure_window}")
        if self.duty_measure < 0 or self.duty_lock < 0:
            raise ValueError("duty cycle durations must be >= 0")

    @property
    def live_fraction(self) -> float:
        """Fraction of wall-clock time spent measuring."""
        total = self.duty_measure + self.duty_lock
        return self.duty_measure / total if total > 0 else 1.0


@dataclass(frozen=True)
class ApdModel:
    dark_rate: float = 0.4            # s^-1
    cw_reference_rate: float = 275.0  # s^-1, total click rate under cw pumping

    def __post_init__(self):
        if self.dark_rate < 0:
            raise ValueError(f"dark_rate must be >= 0, got {self.dark_rate}")
        if not self.cw_reference_rate > 0:
            raise ValueError(f"cw_reference_rate must be > 0, got {self.cw_reference_rate}")
        if self.cw_reference_rate < self.dark_rate:
            raise ValueError("cw_reference_rate cannot be below the dark rate")

    @property
    def intensity_to_rate(self) -> float:
        """Calibration constant C: a unit-intensity cw field gives ``cw_reference_rate``."""
        return self.cw_reference_rate - self.dark_rate


class ClickRecord(NamedTuple):
    pulse_index: int
    delay: float  # ns from the electronic pulse front


@dataclass(frozen=True)
class Clicks:
    """Columnar list of click records, ordered by (pulse_index, delay)."""

    pulse_index: np.ndarray
    delay: np.ndarray
    n_pulses: int = 0
    rep_rate: float = 50e3

    def __post_init__(self):
        object.__setattr__(self, "pulse_index", np.asarray(self.pulse_index, dtype=np.int64))
        object.__setattr__(self, "delay", np.asarray(self.delay, dtype=float))
        if self.pulse_index.shape != self.delay.shape:
            raise ValueError("pulse_index and delay must have the same length")

    def __len__(self):
        return self.delay.size

    def __iter__(self) -> Iterator[ClickRecord]:
        for i, d in zip(self.pulse_index.tolist(), self.delay.tolist()):
            yield ClickRecord(i, d)

    def __getitem__(self, i) -> ClickRecord:
        return ClickRecord(int(self.pulse_index[i]), float(self.delay[i]))

    @property
    def live_time(self) -> float:
        """Live measurement time in seconds covered by the simulated pulses."""
        return self.n_pulses / self.rep_rate

    @classmethod
    def from_records(cls, records, n_pulses: int = 0, rep_rate: float = 50e3) -> "Clicks":
        records = list(records)
        idx = [r[0] for r in records]
        delay = [r[1] for r in records]
        return cls(np.array(idx, dtype=np.int64), np.array(delay, dtype=float), n_pulses, rep_rate)

    def subset(self, mask) -> "Clicks":
        return Clicks(self.pulse_index[mask], self.delay[mask], self.n_pulses, self.rep_rate)


@dataclass(frozen=True)
class DelayHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    total_live_time: float = 0.0
    normalized: np.ndarray | None = None
    background_from: float | None = None

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])

    @property
    def bin_starts(self) -> np.ndarray:
        return self.bin_edges[:-1]

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def background_mask(self, background_from: float | None = None) -> np.ndarray:
        start = self.background_from if background_from is None else background_from
        if start is None:
            start = 0.8 * self.bin_edges[-1]
        return self.bin_starts >= start - 1e-9


def filtered_pulse(pulse: PulseProfile, chain: FilterChain, dt: float = 1.0,
                   n_samples: int = 500, offset: float = 0.0) -> SampledSignal:
    """Pump pulse passed through ``chain``, with the leakage floor in steady state.

    The floor is continuous in the experiment, so only the excess above it
    is filtered from rest; the filters have unit DC gain.
    """
    z_p = sample_pulse(pulse, dt, n_samples, offset=offset)
    floor = pulse.amplitude * pulse.extinction
    excess = filter_signal(z_p.with_samples(z_p.samples - floor), chain)
    return excess.with_samples(excess.samples + floor)


def click_rate_profile(pulse: PulseProfile, chain: FilterChain, apd: ApdModel,
                       dt: float = 1.0, n_samples: int = 500, offset: float = 0.0,
                       leakage: str = "intensity") -> SampledSignal:
    """Instantaneous click rate (s^-1) versus delay from the pulse front.

    ``rate = C |z|^2 + dark`` where ``z`` is the filtered pulse field.
    ``leakage`` picks what the extinction ratio describes: with
    ``"intensity"`` the off-state pump intensity is ``extinction`` (field floor
    ``sqrt(extinction)``), with ``"field"`` the field floor is ``extinction``.
    """
    if leakage not in LEAKAGE_MODES:
        raise ValueError(f"leakage must be one of {LEAKAGE_MODES}, got {leakage!r}")
    if leakage == "intensity":
        pulse = pulse.with_extinction(float(np.sqrt(pulse.extinction)))
    z = filtered_pulse(pulse, chain, dt, n_samples, offset)
    return rate_from_field(z, apd)


def rate_from_field(z: SampledSignal, apd: ApdModel) -> SampledSignal:
    return z.with_samples(apd.intensity_to_rate * np.square(z.samples) + apd.dark_rate)


def background_rate(pulse: PulseProfile, apd: ApdModel, leakage: str = "intensity") -> float:
    """Off-pulse plateau of :func:`click_rate_profile` in s^-1."""
    floor_intensity = pulse.extinction if leakage == "intensity" else pulse.extinction ** 2
    return apd.intensity_to_rate * pulse.amplitude ** 2 * floor_intensity + apd.dark_rate


def expected_clicks_per_pulse(rate_profile: SampledSignal, window: float | None = None) -> np.ndarray:
    """Expected clicks per pulse in each sample bin of ``rate_profile``."""
    lam = rate_profile.samples * rate_profile.dt * 1e-9
    if window is not None:
        lam = lam[rate_profile.times < rate_profile.start_time + window - 1e-9]
    return lam


def simulate_clicks(timing: ExperimentTiming, rate_profile: SampledSignal, n_pulses: int,
                    seed: int, block_size: int = 1 << 20) -> Clicks:
    """Inhomogeneous Poisson click delays for ``n_pulses`` pump pulses.

    Each sample bin of ``rate_profile`` gets Poisson counts per pulse with
    mean ``rate * dt``; click delays are uniform within their bin. Pulses
    are processed in fixed blocks, block ``b`` drawing from the stream
    seeded by ``(seed, b)``, so results do not depend on how blocks are
    scheduled.
    """
    if n_pulses <= 0:
        raise ValueError(f"n_pulses must be > 0, got {n_pulses}")
    lam = expected_clicks_per_pulse(rate_profile, timing.measure_window)
    if np.any(lam < 0):
        raise ValueError("rate profile must be non-negative")
    starts = rate_profile.start_time + rate_profile.dt * np.arange(lam.size)
    idx_parts, delay_parts = [], []
    for b, first in enumerate(range(0, n_pulses, block_size)):
        m = min(block_size, n_pulses - first)
        rng = np.random.default_rng([seed, b])
        counts = rng.poisson(m * lam)
        total = int(counts.sum())
        if total == 0:
            continue
        bins = np.repeat(np.arange(lam.size), counts)
        idx_parts.append(first + rng.integers(0, m, size=total))
        delay_parts.append(starts[bins] + rate_profile.dt * rng.random(total))
    if not idx_parts:
        return Clicks(np.empty(0, np.int64), np.empty(0), n_pulses, timing.rep_rate)
    idx = np.concatenate(idx_parts)
    delay = np.concatenate(delay_parts)
    order = np.lexsort((delay, idx))
    return Clicks(idx[order], delay[order], n_pulses, timing.rep_rate)


def histogram_clicks(clicks: Clicks, bin_width: float = 2.0, window: float = 500.0,
                     normalize: bool = True, background_from: float | None = None) -> DelayHistogram:
    """Bin click delays over ``[0, window)``.

    With ``normalize`` the histogram also carries each bin divided by the
    mean count of the off-pulse bins (delays >= ``background_from``, by
    default the last 20% of the window).
    """
    n_bins = window / bin_width
    if bin_width <= 0 or abs(n_bins - round(n_bins)) > 1e-9:
        raise ValueError(f"bin width {bin_width} ns does not divide window {window} ns")
    edges = np.linspace(0.0, window, int(round(n_bins)) + 1)
    counts, _ = np.histogram(clicks.delay, bins=edges)
    if background_from is None:
        background_from = 0.8 * window
    hist = DelayHistogram(edges, counts, clicks.live_time, None, background_from)
    if not normalize:
        return hist
    if len(clicks) == 0:
        raise EmptyInput("cannot normalize a histogram with no clicks")
    level = counts[hist.background_mask()].mean()
    if not level > 0:
        raise EmptyInput("no clicks in the off-pulse region; cannot normalize to background")
    return DelayHistogram(edges, counts, clicks.live_time, counts / level, background_from)


def bin_model(model: SampledSignal, edges: np.ndarray, oversample: int = 16) -> np.ndarray:
    """Mean of a sampled model over each histogram bin (linear interpolation)."""
    fine = (edges[:-1, None] + (np.arange(oversample) + 0.5)[None, :] / oversample
            * np.diff(edges)[:, None])
    return np.interp(fine, model.times, model.samples).mean(axis=1)


def expected_histogram(rate_profile: SampledSignal, n_pulses: int, bin_width: float,
                       window: float) -> np.ndarray:
    """Expected counts per histogram bin for :func:`simulate_clicks` output."""
    lam = expected_clicks_per_pulse(rate_profile, window) * n_pulses
    per_bin = bin_width / rate_profile.dt
    if abs(per_bin - round(per_bin)) > 1e-9:
        raise ValueError("bin width must be a multiple of the rate profile spacing")
    return lam.reshape(-1, int(round(per_bin))).sum(axis=1)


@dataclass(frozen=True)
class ScaleFit:
    factor: float
    factor_err: float
    background: float
    residuals: np.ndarray
    chi2_per_bin: float


def fit_scale_to_model(hist: DelayHistogram, model: SampledSignal,
                       background_from: float | None = None) -> ScaleFit:
    """Scale a model curve onto background-subtracted click counts.

    Both the counts and the binned model have their off-pulse level removed;
    the remaining model shape is fitted with one multiplicative factor by
    least squares. ``chi2_per_bin`` uses Poisson variances of the fitted
    expectation.
    """
    m = bin_model(model, hist.bin_edges)
    mask = hist.background_mask(background_from)
    if not mask.any():
        raise ValueError("no off-pulse bins to estimate the background from")
    m = m - m[mask].mean()
    if not np.any(np.abs(m) > 0):
        raise DegenerateModel("model has no structure above its background")
    counts = hist.counts.astype(float)
    background = counts[mask].mean()
    data = counts - background
    mm = float(np.dot(m, m))
    factor = float(np.dot(m, data) / mm)
    var = np.maximum(factor * m + background, 1.0)
    factor_err = float(np.sqrt(np.dot(m * m, var)) / mm)
    residuals = data - factor * m
    dof = max(residuals.size - 2, 1)
    return ScaleFit(factor, factor_err, float(background), residuals,
                    float(np.sum(residuals ** 2 / var) / dof))


def gate_clicks(clicks: Clicks, window_center: float, window_len: float) -> Clicks:
    """Keep the clicks inside the acceptance window ``center +- len/2``."""
    if not window_len > 0:
        raise ValueError(f"window_len must be > 0, got {window_len}")
    return clicks.subset(np.abs(clicks.delay - window_center) <= window_len / 2)


def peak_delay(rate_profile: SampledSignal) -> float:
    return float(rate_profile.times[np.argmax(rate_profile.samples)])


def herald_background_fraction(rate_profile: SampledSignal, plateau: float,
                               window_center: float, window_len: float) -> float:
    """Share of gated clicks expected from the flat background (leakage + dark)."""
    t = rate_profile.times
    inside = np.abs(t - window_center) <= window_len / 2
    total = rate_profile.samples[inside].sum()
    if total <= 0:
        return 0.0
    return float(min(1.0, plateau * inside.sum() / total))


def click_rates(rate_profile: SampledSignal, timing: ExperimentTiming) -> dict:
    """Expected click rates for a rate profile under ``timing``."""
    per_pulse = float(expected_clicks_per_pulse(rate_profile, timing.measure_window).sum())
    live = per_pulse * timing.rep_rate
    return {
        "clicks_per_pulse": per_pulse,
        "rate_per_live_s": live,
        "rate_per_wall_s": live * timing.live_fraction,
    }
