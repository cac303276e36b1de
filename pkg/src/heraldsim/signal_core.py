"""Pump pulse profiles, Lorentzian cavity filters and their discrete convolution.

Internal units: time in ns, angular frequency in rad/ns. Cavity widths quoted
as ordinary frequencies in MHz (the usual ``kappa / 2pi`` numbers) are
converted with :func:`mhz_to_rad_per_ns`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import GridTooCoarse

#: largest kappa * dt accepted by :func:`filter_signal`
MAX_KAPPA_DT = 0.5


def mhz_to_rad_per_ns(f_mhz: float) -> float:
    """Convert an ordinary frequency in MHz to an angular frequency in rad/ns."""
    return 2.0 * np.pi * f_mhz * 1e-3


def rad_per_ns_to_mhz(omega: float) -> float:
    return omega / (2.0 * np.pi * 1e-3)


@dataclass(frozen=True)
class PulseProfile:
    """Trapezoidal pump pulse sitting on a leakage floor.

    The pulse starts rising at t = 0, reaches the flat top after
    ``rise_time``, starts falling at ``duration`` and is back on the floor at
    ``duration + rise_time``.
    """

    duration: float
    rise_time: float = 5.0
    extinction: float = 0.015
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"pulse duration must be > 0, got {self.duration}")
        if not self.rise_time >= 0:
            raise ValueError(f"rise_time must be >= 0, got {self.rise_time}")
        if not 0 <= self.extinction < 1:
            raise ValueError(f"extinction must lie in [0, 1), got {self.extinction}")

    def with_extinction(self, extinction: float) -> "PulseProfile":
        return PulseProfile(self.duration, self.rise_time, extinction, self.amplitude)


@dataclass(frozen=True)
class CavityFilter:
    """Single-pole cavity field filter; ``kappa`` is the HWHM in rad/ns."""

    kappa: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")

    @classmethod
    def from_mhz(cls, kappa_over_2pi_mhz: float) -> "CavityFilter":
        """Filter whose half width ``kappa / 2pi`` is given in MHz."""
        return cls(mhz_to_rad_per_ns(kappa_over_2pi_mhz))

    @classmethod
    def from_bandwidth_mhz(cls, bandwidth_over_2pi_mhz: float) -> "CavityFilter":
        """Filter from a full bandwidth ``gamma / 2pi`` in MHz (kappa = gamma / 2)."""
        return cls(mhz_to_rad_per_ns(bandwidth_over_2pi_mhz) / 2.0)

    @property
    def kappa_over_2pi_mhz(self) -> float:
        return rad_per_ns_to_mhz(self.kappa)

    def frequency_response(self, omega):
        """Complex field transmission kappa / (kappa + i omega)."""
        omega = np.asarray(omega, dtype=float)
        return self.kappa / (self.kappa + 1j * omega)


@dataclass(frozen=True)
class FilterChain:
    filters: tuple[CavityFilter, ...]

    def __init__(self, filters: Iterable[CavityFilter]):
        filters = tuple(filters)
        if not filters:
            raise ValueError("FilterChain needs at least one filter")
        object.__setattr__(self, "filters", filters)

    def __iter__(self):
        return iter(self.filters)

    def __len__(self):
        return len(self.filters)

    def frequency_response(self, omega):
        out = np.ones_like(np.asarray(omega, dtype=float), dtype=complex)
        for f in self.filters:
            out = out * f.frequency_response(omega)
        return out


@dataclass(frozen=True)
class SampledSignal:
    """Real samples on the uniform grid ``start_time + n * dt`` (ns)."""

    start_time: float
    dt: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-d array")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.start_time + self.dt * np.arange(self.samples.size)

    def with_samples(self, samples) -> "SampledSignal":
        return SampledSignal(self.start_time, self.dt, samples)


def evaluate_pulse(p: PulseProfile, t):
    """Pulse amplitude at time(s) ``t`` in ns.

    Returns a float for scalar ``t`` and an array otherwise. With
    ``rise_time == 0`` the flat top is the half-open interval [0, duration).
    """
    t_arr = np.asarray(t, dtype=float)
    if p.rise_time > 0:
        up = np.clip(t_arr / p.rise_time, 0.0, 1.0)
        down = np.clip((p.duration + p.rise_time - t_arr) / p.rise_time, 0.0, 1.0)
        shape = np.minimum(up, down)
    else:
        shape = ((t_arr >= 0) & (t_arr < p.duration)).astype(float)
    value = p.amplitude * (p.extinction + (1.0 - p.extinction) * shape)
    return float(value) if np.ndim(t) == 0 else value


def sample_pulse(p: PulseProfile, dt: float = 1.0, n_samples: int = 500,
                 start_time: float = 0.0, offset: float = 0.0) -> SampledSignal:
    """Sample the pulse on a grid; ``offset`` delays the pulse front."""
    grid = start_time + dt * np.arange(n_samples)
    return SampledSignal(start_time, dt, evaluate_pulse(p, grid - offset))


def impulse_response(f: CavityFilter, t):
    """Causal unit-area response kappa * exp(-kappa t) (zero for t < 0)."""
    t_arr = np.asarray(t, dtype=float)
    out = np.where(t_arr >= 0, f.kappa * np.exp(-f.kappa * np.maximum(t_arr, 0.0)), 0.0)
    return float(out) if np.ndim(t) == 0 else out


def _check_grid(chain: Sequence[CavityFilter], dt: float) -> None:
    for f in chain:
        if f.kappa * dt >= MAX_KAPPA_DT:
            raise GridTooCoarse(
                f"kappa*dt = {f.kappa * dt:.3g} >= {MAX_KAPPA_DT} "
                f"(kappa = {f.kappa:.4g} rad/ns, dt = {dt} ns)")


def apply_filter(samples, f: CavityFilter, dt: float, axis: int = -1):
    """One-pole recursion on raw arrays (the engine behind :func:`filter_signal`).

    Each input sample is held constant over the following interval, so
    ``y[n] = a y[n-1] + (1 - a) x[n-1]`` with ``a = exp(-kappa dt)`` is the
    exact continuous response at the grid points. Input before the first
    sample is taken as zero.
    """
    _check_grid([f], dt)
    a = np.exp(-f.kappa * dt)
    return lfilter([0.0, 1.0 - a], [1.0, -a], samples, axis=axis)


def filter_signal(z_p: SampledSignal, chain: FilterChain | Sequence[CavityFilter]) -> SampledSignal:
    """Causal convolution of ``z_p`` with the cascade response of ``chain``."""
    _check_grid(list(chain), z_p.dt)
    y = np.array(z_p.samples, dtype=float)
    for f in chain:
        y = apply_filter(y, f, z_p.dt)
    return z_p.with_samples(y)


def intensity(z: SampledSignal) -> SampledSignal:
    return z.with_samples(np.square(z.samples))
