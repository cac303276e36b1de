"""Synthetic heralded homodyne records.

Every record is a 500 ns window sampled at 1 ns. The white vacuum noise has
variance 1/2 per sample; the heralded state sits in a single temporal mode
and all orthogonal modes stay in vacuum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ZeroMode
from .fock import MAX_FOCK, N_FOCK, sample_fock
from .signal_core import CavityFilter, PulseProfile, filter_signal, sample_pulse

VACUUM_VARIANCE = 0.5
DEFAULT_WINDOW_NS = 500.0
DEFAULT_DT_NS = 1.0


@dataclass(frozen=True)
class TargetState:
    """Photon-number populations rho_00..rho_66 of a phase-invariant state."""

    populations: np.ndarray

    def __post_init__(self):
        pops = np.zeros(N_FOCK)
        given = np.asarray(self.populations, dtype=float).ravel()
        if given.size > N_FOCK:
            raise ValueError(f"at most {N_FOCK} populations (n = 0..{MAX_FOCK}), got {given.size}")
        pops[:given.size] = given
        if np.any(pops < 0):
            raise ValueError("populations must be non-negative")
        if abs(pops.sum() - 1.0) > 1e-12:
            raise ValueError(f"populations must sum to 1, got {pops.sum()!r}")
        pops.setflags(write=False)
        object.__setattr__(self, "populations", pops)

    @classmethod
    def normalized(cls, populations: Sequence[float]) -> "TargetState":
        """Rescale leading diagonals (e.g. values rounded to three digits) to unit sum."""
        p = np.asarray(populations, dtype=float)
        return cls(p / p.sum())

    @classmethod
    def vacuum(cls) -> "TargetState":
        return cls([1.0])

    @classmethod
    def fock(cls, n: int) -> "TargetState":
        p = np.zeros(N_FOCK)
        p[n] = 1.0
        return cls(p)

    @property
    def mean_photon_number(self) -> float:
        return float(np.dot(np.arange(N_FOCK), self.populations))

    @property
    def quadrature_variance(self) -> float:
        return VACUUM_VARIANCE + self.mean_photon_number


@dataclass(frozen=True)
class ModeFunction:
    values: np.ndarray
    dt: float = DEFAULT_DT_NS

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        norm2 = float(np.dot(v, v))
        if abs(norm2 - 1.0) > 1e-12:
            raise ValueError(f"mode function must have unit norm, got sum of squares {norm2!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_unnormalized(cls, values, dt: float = DEFAULT_DT_NS) -> "ModeFunction":
        v = np.asarray(values, dtype=float)
        norm = np.linalg.norm(v)
        if not norm > 0 or not np.isfinite(norm):
            raise ZeroMode("mode function has zero norm inside the window")
        v = v / norm
        # one more pass pins the norm to within rounding
        return cls(v / np.sqrt(np.dot(v, v)), dt)

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.size)

    def overlap(self, other: "ModeFunction") -> float:
        """|<self, other>|; its square is the mode-matching efficiency."""
        return float(abs(np.dot(self.values, other.values)))


@dataclass(frozen=True)
class TraceWindow:
    samples: np.ndarray
    qualifier_delay: float


@dataclass
class TraceSet:
    """Homodyne windows stacked as rows of ``samples`` (n_windows x n_samples)."""

    samples: np.ndarray
    qualifier_delays: np.ndarray
    vacuum: bool
    dt: float = DEFAULT_DT_NS
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples))
        self.qualifier_delays = np.asarray(self.qualifier_delays, dtype=float)
        if self.qualifier_delays.shape != (self.samples.shape[0],):
            raise ValueError("need one qualifier delay per window")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def window_length(self) -> int:
        return self.samples.shape[1]

    @property
    def windows(self) -> list[TraceWindow]:
        return [TraceWindow(s, float(d)) for s, d in zip(self.samples, self.qualifier_delays)]


def optimal_mode(pulse: PulseProfile, opo: CavityFilter, delay: float = 0.0,
                 dt: float = DEFAULT_DT_NS, n_samples: int = 500) -> ModeFunction:
    """Pump pulse shape convolved with the OPO response, delayed and normalized.

    The leakage floor is dropped: it carries no photon-pair signal within the
    acceptance window, and would otherwise spread the mode over the window.
    """
    if delay < 0:
        raise ValueError(f"delay must be >= 0, got {delay}")
    z_p = sample_pulse(pulse.with_extinction(0.0), dt, n_samples, offset=delay)
    z = filter_signal(z_p, [opo])
    return ModeFunction.from_unnormalized(z.samples, dt)


def sample_quadratures(state: TargetState, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draws from the phase-averaged marginal sum_n rho_nn P_n(x)."""
    n = rng.choice(N_FOCK, size=size, p=state.populations)
    u = rng.random(size)
    x = np.empty(size)
    for k in range(N_FOCK):
        sel = n == k
        if sel.any():
            x[sel] = sample_fock(k, u[sel])
    return x


def sample_mode_quadrature(state: TargetState, seed) -> float:
    return float(sample_quadratures(state, 1, np.random.default_rng(seed))[0])


def synthesize_windows(x: np.ndarray, mode: ModeFunction, rng: np.random.Generator) -> np.ndarray:
    """Windows whose projection onto ``mode`` equals ``x`` exactly.

    White vacuum noise ``w`` is drawn, its component along the mode is
    replaced by ``x``: ``s = w + (x - <w, psi>) psi``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    psi = mode.values
    w = rng.normal(0.0, np.sqrt(VACUUM_VARIANCE), size=(x.size, psi.size))
    p = w @ psi
    return w + np.outer(x - p, psi)


def synthesize_window(x: float, mode: ModeFunction, seed, qualifier_delay: float = 0.0) -> TraceWindow:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return TraceWindow(synthesize_windows(np.array([x]), mode, rng)[0], qualifier_delay)


def generate_trace_set(state: TargetState, true_mode: ModeFunction, n_windows: int,
                       vacuum: bool = False, seed: int = 0, *,
                       gate_center: float = 60.0, gate_len: float = 40.0,
                       background_fraction: float = 0.0, electronic_noise: float = 0.0,
                       block_size: int = 1024) -> TraceSet:
    """Generate ``n_windows`` independent heralded (or vacuum) windows.

    ``background_fraction`` of the heralds are background clicks that herald
    vacuum. ``electronic_noise`` is the standard deviation of extra white
    detector noise added to every sample; it breaks the exact projection
    identity. Window block ``b`` draws from the stream seeded by ``(seed, b)``.
    """
    if n_windows <= 0:
        raise ValueError(f"n_windows must be > 0, got {n_windows}")
    if not 0 <= background_fraction <= 1:
        raise ValueError("background_fraction must lie in [0, 1]")
    n_samples = len(true_mode)
    samples = np.empty((n_windows, n_samples))
    delays = np.empty(n_windows)
    for b, first in enumerate(range(0, n_windows, block_size)):
        m = min(block_size, n_windows - first)
        rng = np.random.default_rng([seed, b])
        delays[first:first + m] = gate_center + gate_len * (rng.random(m) - 0.5)
        if vacuum:
            block = rng.normal(0.0, np.sqrt(VACUUM_VARIANCE), size=(m, n_samples))
        else:
            x = sample_quadratures(state, m, rng)
            if background_fraction > 0:
                bg = rng.random(m) < background_fraction
                x[bg] = sample_fock(0, rng.random(int(bg.sum())))
            block = synthesize_windows(x, true_mode, rng)
        if electronic_noise > 0:
            block += rng.normal(0.0, electronic_noise, size=block.shape)
        samples[first:first + m] = block
    meta = {
        "seed": int(seed),
        "populations": [float(p) for p in state.populations],
        "background_fraction": float(background_fraction),
        "electronic_noise": float(electronic_noise),
    }
    return TraceSet(samples, delays, bool(vacuum), true_mode.dt, meta)
