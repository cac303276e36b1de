"""End-to-end run: clicks -> gate -> homodyne -> mode -> projection -> fit -> W(0,0)."""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import click_sim, homodyne_sim, mode_tomography as mt
from .config import RunConfig
from .errors import HeraldSimError, NoSignal
from .signal_core import CavityFilter, FilterChain, PulseProfile

log = logging.getLogger(__name__)

STAGES = ("clicks", "gate", "homodyne", "mode", "projection", "fit", "wigner")


class PipelineError(HeraldSimError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


@contextmanager
def stage(name: str):
    log.info("stage %s", name)
    try:
        yield
    except PipelineError:
        raise
    except (HeraldSimError, ValueError, AssertionError, OSError) as err:
        raise PipelineError(name, err) from err


def derive_seed(seed: int, label: str) -> int:
    """Independent 63-bit seed for one pipeline stream."""
    words = [seed] + [ord(c) for c in label]
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0] >> 1)


def pulse_from_config(cfg: RunConfig, duration_ns: float | None = None) -> PulseProfile:
    p = cfg.pulse
    return PulseProfile(p.duration_ns if duration_ns is None else duration_ns,
                        p.rise_ns, p.extinction)


def chain_from_config(cfg: RunConfig) -> FilterChain:
    return FilterChain(CavityFilter.from_mhz(f.kappa_over_2pi_MHz) for f in cfg.filters)


def opo_from_config(cfg: RunConfig) -> CavityFilter:
    return CavityFilter.from_mhz(cfg.opo.kappa_over_2pi_MHz)


def timing_from_config(cfg: RunConfig) -> click_sim.ExperimentTiming:
    t = cfg.timing
    return click_sim.ExperimentTiming(t.rep_rate_Hz, t.window_ns, t.duty_measure_s, t.duty_lock_s)


def apd_from_config(cfg: RunConfig) -> click_sim.ApdModel:
    return click_sim.ApdModel(cfg.apd.dark_rate_per_s, cfg.apd.cw_rate_per_s)


def rate_profile_from_config(cfg: RunConfig, duration_ns: float | None = None):
    return click_sim.click_rate_profile(
        pulse_from_config(cfg, duration_ns), chain_from_config(cfg), apd_from_config(cfg),
        dt=cfg.timing.dt_ns, n_samples=int(round(cfg.timing.window_ns / cfg.timing.dt_ns)),
        leakage=cfg.apd.leakage)


@dataclass
class PipelineResult:
    """Report plus the arrays behind it (for CSV export)."""

    report: dict
    histogram: click_sim.DelayHistogram | None = None
    rate_profile: object = None
    variance: mt.VarianceTrace | None = None
    variance_lowpassed: mt.VarianceTrace | None = None
    true_mode: homodyne_sim.ModeFunction | None = None
    mode: homodyne_sim.ModeFunction | None = None
    quadratures: mt.QuadratureSet | None = None
    fit: mt.FockFit | None = None
    extras: dict = field(default_factory=dict)


def run_pipeline(cfg: RunConfig, simulate_all_lengths: bool = True) -> PipelineResult:
    """Run every stage for ``cfg`` and collect a JSON-ready report."""
    seed = cfg.seed
    timing = timing_from_config(cfg)
    apd = apd_from_config(cfg)
    pulse = pulse_from_config(cfg)
    window, dt = cfg.timing.window_ns, cfg.timing.dt_ns
    n_samples = int(round(window / dt))
    background_from = cfg.clicks.background_from_ns
    report: dict = {"seed": seed, "config_sha256": cfg.digest().hex()}

    with stage("clicks"):
        plateau = click_sim.background_rate(pulse, apd, cfg.apd.leakage)
        lengths = sorted(set(cfg.clicks.compare_pulse_ns) | {cfg.pulse.duration_ns})
        per_length = {}
        clicks = profile = None
        for length in lengths:
            length_profile = rate_profile_from_config(cfg, length)
            entry = {f"model_{k}": v
                     for k, v in click_sim.click_rates(length_profile, timing).items()}
            entry["model_peak_delay_ns"] = click_sim.peak_delay(length_profile)
            is_main = length == cfg.pulse.duration_ns
            if simulate_all_lengths or is_main:
                sim = click_sim.simulate_clicks(timing, length_profile, cfg.clicks.n_pulses,
                                                derive_seed(seed, f"clicks-{length:g}"))
                entry["simulated_clicks"] = len(sim)
                entry["simulated_rate_per_live_s"] = len(sim) / sim.live_time
                if is_main:
                    clicks, profile = sim, length_profile
            per_length[f"{length:g}"] = entry
        hist = click_sim.histogram_clicks(clicks, cfg.clicks.bin_ns, window,
                                          normalize=len(clicks) > 0,
                                          background_from=background_from)
        cw_rate = click_sim.rate_from_field(profile.with_samples(np.ones(n_samples)), apd)
        scale = click_sim.fit_scale_to_model(hist, profile) if len(clicks) else None
        report["clicks"] = {
            "n_pulses": cfg.clicks.n_pulses,
            "live_time_s": clicks.live_time,
            "wall_time_s": clicks.live_time / timing.live_fraction,
            "live_fraction": timing.live_fraction,
            "per_pulse_length": per_length,
            "background_rate_per_s": plateau,
            "cw_rate_per_s": float(cw_rate.samples.mean()),
            "histogram_total": int(hist.counts.sum()),
            "model_scale_factor": None if scale is None else scale.factor,
            "model_chi2_per_bin": None if scale is None else scale.chi2_per_bin,
        }

    with stage("gate"):
        center = cfg.gate.center_ns
        if center is None:
            center = click_sim.peak_delay(profile)
        gated = click_sim.gate_clicks(clicks, center, cfg.gate.length_ns)
        herald_bg = click_sim.herald_background_fraction(profile, plateau, center,
                                                         cfg.gate.length_ns)
        herald_rate = len(gated) / clicks.live_time
        opo = opo_from_config(cfg)
        bandwidth_mhz = 2 * opo.kappa_over_2pi_mhz
        report["gate"] = {
            "center_ns": center,
            "length_ns": cfg.gate.length_ns,
            "gated_clicks": len(gated),
            "herald_rate_per_live_s": herald_rate,
            "herald_rate_per_wall_s": herald_rate * timing.live_fraction,
            "background_herald_fraction": herald_bg,
            "opo_bandwidth_MHz": bandwidth_mhz,
            "spectral_brightness_per_s_per_MHz": herald_rate / bandwidth_mhz,
        }

    with stage("homodyne"):
        state = homodyne_sim.TargetState.normalized(cfg.homodyne.populations)
        true_mode = homodyne_sim.optimal_mode(pulse, opo, cfg.homodyne.path_delay_ns, dt,
                                              n_samples)
        bg_fraction = herald_bg if cfg.homodyne.background_heralds else 0.0
        common = dict(gate_center=center, gate_len=cfg.gate.length_ns,
                      electronic_noise=cfg.homodyne.electronic_noise)
        signal = homodyne_sim.generate_trace_set(
            state, true_mode, cfg.homodyne.n_windows, False, derive_seed(seed, "signal"),
            background_fraction=bg_fraction, **common)
        vacuum = homodyne_sim.generate_trace_set(
            state, true_mode, cfg.homodyne.n_vacuum_windows, True,
            derive_seed(seed, "vacuum"), **common)
        report["homodyne"] = {
            "true_populations": [float(p) for p in state.populations],
            "n_windows": len(signal),
            "n_vacuum_windows": len(vacuum),
            "background_fraction_applied": bg_fraction,
        }

    with stage("mode"):
        raw = mt.variance_trace(signal, vacuum)
        smooth = mt.lowpass(raw, cfg.analysis.lowpass_MHz)
        report["mode"] = {
            "method": cfg.analysis.mode_method,
            "variance_peak": float(smooth.values.max()),
            "variance_peak_delay_ns": float(np.argmax(smooth.values) * dt),
        }
        try:
            if cfg.analysis.mode_method == "model":
                mode = mt.estimate_mode_from_variance(smooth, "model",
                                                      rise_time=pulse.rise_time,
                                                      kappa=opo.kappa)
            else:
                mode = mt.estimate_mode_from_variance(smooth, "direct", unimodal=True)
        except NoSignal as err:
            # only fatal if the estimate is what gets projected on
            if cfg.analysis.mode_source == "estimated":
                raise
            mode = None
            report["mode"]["error"] = str(err)
        else:
            report["mode"]["fidelity_to_optimal"] = mt.mode_fidelity(mode, true_mode)
            report["mode"]["overlap_to_optimal"] = mode.overlap(true_mode)

    with stage("projection"):
        use = mode if cfg.analysis.mode_source == "estimated" else true_mode
        q = mt.project(signal, use, vacuum)
        report["projection"] = {
            "mode_source": cfg.analysis.mode_source,
            "n_points": len(q),
            "variance": float(np.var(q.points)),
            "vacuum_scale": q.scale,
        }

    with stage("fit"):
        fit = mt.fit_fock_mixture(q, tol=cfg.analysis.em_tol, max_iter=cfg.analysis.em_max_iter,
                                  n_max=cfg.analysis.fock_cutoff)
        report["fit"] = {
            "rho": [float(r) for r in fit.rho.rho],
            "rho_binned": [float(r) for r in fit.binned.rho],
            "log_likelihood": fit.log_likelihood,
            "em_updates": fit.n_iter,
            "converged": fit.converged,
        }

    with stage("wigner"):
        report["wigner"] = {
            "W00": mt.wigner_center(fit.rho),
            "W00_binned": mt.wigner_center(fit.binned),
            "W00_true": mt.wigner_center(state.populations),
        }

    return PipelineResult(report, hist, profile, raw, smooth, true_mode, mode, q, fit)


def format_report(report: dict) -> str:
    """Human-readable summary of a pipeline report."""
    lines = [f"seed {report['seed']}  config {report['config_sha256'][:12]}"]
    c = report.get("clicks")
    if c:
        lines.append(f"clicks: live time {c['live_time_s']:.4g} s, background "
                     f"{c['background_rate_per_s']:.3g} /s, cw {c['cw_rate_per_s']:.4g} /s")
        for length, e in c["per_pulse_length"].items():
            sim = e.get("simulated_rate_per_live_s")
            sim_txt = "" if sim is None else f", simulated {sim:.4g} /s"
            lines.append(f"  {length:>5} ns pulse: model {e['model_rate_per_live_s']:.4g} /s"
                         f"{sim_txt}, peak at {e['model_peak_delay_ns']:.0f} ns")
    g = report.get("gate")
    if g:
        lines.append(f"gate: {g['length_ns']:g} ns at {g['center_ns']:.1f} ns, heralds "
                     f"{g['herald_rate_per_live_s']:.4g} /s, background share "
                     f"{g['background_herald_fraction']:.3f}, brightness "
                     f"{g['spectral_brightness_per_s_per_MHz']:.4g} /s/MHz")
    m = report.get("mode")
    if m and "fidelity_to_optimal" in m:
        lines.append(f"mode ({m['method']}): fidelity to optimal {m['fidelity_to_optimal']:.4f}")
    elif m:
        lines.append(f"mode ({m['method']}): not estimated ({m.get('error', '')})")
    f = report.get("fit")
    if f:
        rho = ", ".join(f"{r:.3f}" for r in f["rho"])
        lines.append(f"rho: [{rho}]  ({f['em_updates']} EM updates)")
        rho_b = ", ".join(f"{r:.3f}" for r in f["rho_binned"])
        lines.append(f"rho (binned LSQ): [{rho_b}]")
    w = report.get("wigner")
    if w:
        lines.append(f"W(0,0) = {w['W00']:.4f}  (binned {w['W00_binned']:.4f}, "
                     f"truth {w['W00_true']:.4f})")
    return "\n".join(lines)
