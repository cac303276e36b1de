"""Command-line entry point: ``heraldsim <subcommand> ...``.

Every subcommand reads an optional TOML config (``--config``), applies
``--set section.key=value`` overrides and then its own flags, which mirror
config fields. Simulation commands refuse to run without ``--seed``.
Failures exit with status 1 and print the stage that failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import click_sim, fileio, homodyne_sim, mode_tomography as mt
from .config import RunConfig, load_config, save_config
from .errors import ConfigValidationError, HeraldSimError
from .pipeline import (PipelineError, derive_seed, format_report,
                       opo_from_config, pulse_from_config, rate_profile_from_config,
                       run_pipeline, stage, timing_from_config)

log = logging.getLogger("heraldsim")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ConfigValidationError(f"--set expects key=value, got {pair!r}")
        out[key.strip()] = _parse_value(value.strip())
    return out


def _build_config(args, flag_map: dict) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    updates = _overrides(args.set)
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            updates[key] = value
    return cfg.updated(updates) if updates else cfg


def _write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _populations(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


# -- subcommands -------------------------------------------------------------

CLICK_FLAGS = {"seed": "seed", "pulse_ns": "pulse.duration_ns",
               "rep_rate": "timing.rep_rate_Hz", "n_pulses": "clicks.n_pulses",
               "bin_ns": "clicks.bin_ns"}


def cmd_simulate_clicks(args) -> int:
    with stage("config"):
        cfg = _build_config(args, CLICK_FLAGS)
    with stage("clicks"):
        timing = timing_from_config(cfg)
        profile = rate_profile_from_config(cfg)
        clicks = click_sim.simulate_clicks(timing, profile, cfg.clicks.n_pulses,
                                           derive_seed(cfg.seed, f"clicks-{cfg.pulse.duration_ns:g}"))
        hist = click_sim.histogram_clicks(clicks, cfg.clicks.bin_ns, cfg.timing.window_ns,
                                          normalize=len(clicks) > 0,
                                          background_from=cfg.clicks.background_from_ns)
    with stage("write"):
        fileio.write_clicks_csv(args.out, clicks)
        if args.histogram:
            fileio.write_histogram_csv(args.histogram, hist)
        if args.model:
            fileio.write_columns_csv(args.model, {"t_ns": profile.times,
                                                  "rate_per_s": profile.samples})
    rates = click_sim.click_rates(profile, timing)
    print(f"{len(clicks)} clicks from {cfg.clicks.n_pulses} pulses "
          f"({len(clicks) / clicks.live_time:.4g} /s live, model "
          f"{rates['rate_per_live_s']:.4g} /s) -> {args.out}")
    return 0


HOMODYNE_FLAGS = {"seed": "seed", "pulse_ns": "pulse.duration_ns",
                  "populations": "homodyne.populations", "n_windows": "homodyne.n_windows",
                  "path_delay_ns": "homodyne.path_delay_ns",
                  "electronic_noise": "homodyne.electronic_noise"}


def cmd_simulate_homodyne(args) -> int:
    with stage("config"):
        cfg = _build_config(args, HOMODYNE_FLAGS)
    with stage("homodyne"):
        n_samples = int(round(cfg.timing.window_ns / cfg.timing.dt_ns))
        mode = homodyne_sim.optimal_mode(pulse_from_config(cfg), opo_from_config(cfg),
                                         cfg.homodyne.path_delay_ns, cfg.timing.dt_ns, n_samples)
        state = homodyne_sim.TargetState.normalized(cfg.homodyne.populations)
        center = cfg.gate.center_ns
        if center is None:
            center = click_sim.peak_delay(rate_profile_from_config(cfg))
        label = "vacuum" if args.vacuum else "signal"
        trace_set = homodyne_sim.generate_trace_set(
            state, mode, cfg.homodyne.n_windows, args.vacuum, derive_seed(cfg.seed, label),
            gate_center=center, gate_len=cfg.gate.length_ns,
            background_fraction=args.background_fraction,
            electronic_noise=cfg.homodyne.electronic_noise)
    with stage("write"):
        fileio.write_trace_set(args.out, trace_set, cfg.digest())
        if args.mode_out:
            fileio.write_mode_csv(args.mode_out, mode)
    kind = "vacuum" if args.vacuum else "heralded"
    print(f"{len(trace_set)} {kind} windows x {trace_set.window_length} samples -> {args.out}")
    return 0


def _read_sets(args):
    with stage("read"):
        signal = fileio.read_trace_set(args.signal)
        vacuum = fileio.read_trace_set(args.vacuum)
    return signal, vacuum


def _estimate_mode(cfg: RunConfig, signal, vacuum):
    with stage("mode"):
        raw = mt.variance_trace(signal, vacuum)
        smooth = mt.lowpass(raw, cfg.analysis.lowpass_MHz)
        if cfg.analysis.mode_method == "model":
            mode = mt.estimate_mode_from_variance(smooth, "model",
                                                  rise_time=cfg.pulse.rise_ns,
                                                  kappa=opo_from_config(cfg).kappa)
        else:
            mode = mt.estimate_mode_from_variance(smooth, "direct", unimodal=True)
    return raw, smooth, mode


ANALYSIS_FLAGS = {"lowpass_mhz": "analysis.lowpass_MHz", "method": "analysis.mode_method"}


def cmd_extract_mode(args) -> int:
    with stage("config"):
        cfg = _build_config(args, ANALYSIS_FLAGS)
    signal, vacuum = _read_sets(args)
    raw, smooth, mode = _estimate_mode(cfg, signal, vacuum)
    with stage("write"):
        fileio.write_mode_csv(args.out, mode)
        if args.variance:
            fileio.write_columns_csv(args.variance, {"t_ns": mode.times, "variance": raw.values,
                                                     "variance_lowpassed": smooth.values})
    peak = float(mode.times[np.argmax(mode.values)])
    print(f"mode from {raw.n_windows} windows, peak at {peak:.0f} ns -> {args.out}")
    return 0


def cmd_tomography(args) -> int:
    with stage("config"):
        cfg = _build_config(args, {**ANALYSIS_FLAGS, "fock_cutoff": "analysis.fock_cutoff"})
    signal, vacuum = _read_sets(args)
    if args.mode:
        with stage("mode"):
            mode = fileio.read_mode_csv(args.mode)
    else:
        _, _, mode = _estimate_mode(cfg, signal, vacuum)
    with stage("projection"):
        q = mt.project(signal, mode, vacuum)
    with stage("fit"):
        fit = mt.fit_fock_mixture(q, tol=cfg.analysis.em_tol, max_iter=cfg.analysis.em_max_iter,
                                  n_max=cfg.analysis.fock_cutoff)
    report = {
        "n_points": len(q),
        "vacuum_scale": q.scale,
        "rho": [float(r) for r in fit.rho.rho],
        "rho_binned": [float(r) for r in fit.binned.rho],
        "log_likelihood": fit.log_likelihood,
        "em_updates": fit.n_iter,
        "converged": fit.converged,
        "W00": mt.wigner_center(fit.rho),
        "W00_binned": mt.wigner_center(fit.binned),
    }
    with stage("write"):
        if args.report:
            _write_json(args.report, report)
        if args.marginal:
            _write_marginal(args.marginal, q, fit)
    rho = ", ".join(f"{r:.3f}" for r in fit.rho.rho[:3])
    print(f"rho_00..22 = {rho}   W(0,0) = {report['W00']:.4f}")
    return 0


def _write_marginal(path, q, fit) -> None:
    hist = mt.marginal_histogram(q)
    fileio.write_columns_csv(path, {
        "bin_center": hist.bin_centers,
        "empirical_density": hist.density,
        "fitted_density": mt.fitted_density(fit.rho, hist.bin_centers),
    })


PIPELINE_FLAGS = {"seed": "seed", "pulse_ns": "pulse.duration_ns",
                  "n_pulses": "clicks.n_pulses", "n_windows": "homodyne.n_windows"}


def cmd_run_pipeline(args) -> int:
    with stage("config"):
        cfg = _build_config(args, PIPELINE_FLAGS)
        if args.n_windows is not None:
            cfg = cfg.updated({"homodyne.n_vacuum_windows": args.n_windows})
    result = run_pipeline(cfg)
    with stage("write"):
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "report.json", result.report)
        (out / "report.txt").write_text(format_report(result.report) + "\n")
        fileio.write_histogram_csv(out / "click_histogram.csv", result.histogram)
        fileio.write_columns_csv(out / "click_model.csv", {"t_ns": result.rate_profile.times,
                                                           "rate_per_s": result.rate_profile.samples})
        fileio.write_columns_csv(out / "variance.csv", {
            "t_ns": result.true_mode.times, "variance": result.variance.values,
            "variance_lowpassed": result.variance_lowpassed.values})
        modes = {"t_ns": result.true_mode.times, "optimal": result.true_mode.values}
        if result.mode is not None:
            modes["estimated"] = result.mode.values
        fileio.write_columns_csv(out / "modes.csv", modes)
        _write_marginal(out / "marginal.csv", result.quadratures, result.fit)
        save_config(cfg, out / "config.toml")
    print(format_report(result.report))
    return 0


def cmd_report(args) -> int:
    with stage("report"):
        report = json.loads(Path(args.report).read_text())
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print(format_report(report))
    return 0


# -- parser ------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML run configuration")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field, e.g. pulse.duration_ns=20 (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heraldsim",
        description="Pulsed heralded single-photon source: click and homodyne "
                    "simulation, temporal-mode extraction and Fock tomography.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-clicks", help="Monte Carlo APD click delays")
    _common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--pulse-ns", type=float, help="flat-top pump pulse length")
    p.add_argument("--rep-rate", type=float, help="pulse repetition rate in Hz")
    p.add_argument("--n-pulses", type=int)
    p.add_argument("--bin-ns", type=float)
    p.add_argument("--out", type=Path, required=True, help="click CSV (pulse_index,delay_ns)")
    p.add_argument("--histogram", type=Path, help="also write the delay histogram CSV")
    p.add_argument("--model", type=Path, help="also write the model click-rate CSV")
    p.set_defaults(func=cmd_simulate_clicks)

    p = sub.add_parser("simulate-homodyne", help="synthetic heralded or vacuum homodyne windows")
    _common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--populations", type=_populations, help="rho_00,rho_11,... (rescaled to 1)")
    p.add_argument("--pulse-ns", type=float)
    p.add_argument("--n-windows", type=int)
    p.add_argument("--vacuum", action="store_true", help="vacuum calibration windows")
    p.add_argument("--background-fraction", type=float, default=0.0,
                   help="share of heralds that herald vacuum")
    p.add_argument("--path-delay-ns", type=float)
    p.add_argument("--electronic-noise", type=float)
    p.add_argument("--out", type=Path, required=True, help="binary trace file")
    p.add_argument("--mode-out", type=Path, help="also write the generating mode CSV")
    p.set_defaults(func=cmd_simulate_homodyne)

    p = sub.add_parser("extract-mode", help="temporal mode from the variance trace")
    _common(p)
    p.add_argument("--signal", type=Path, required=True)
    p.add_argument("--vacuum", type=Path, required=True)
    p.add_argument("--lowpass-mhz", type=float)
    p.add_argument("--method", choices=["model", "direct"])
    p.add_argument("--out", type=Path, required=True, help="mode CSV (t_ns,psi)")
    p.add_argument("--variance", type=Path, help="also write the variance trace CSV")
    p.set_defaults(func=cmd_extract_mode)

    p = sub.add_parser("tomography", help="project, fit Fock populations, W(0,0)")
    _common(p)
    p.add_argument("--signal", type=Path, required=True)
    p.add_argument("--vacuum", type=Path, required=True)
    p.add_argument("--mode", type=Path, help="mode CSV; estimated from the data if omitted")
    p.add_argument("--lowpass-mhz", type=float)
    p.add_argument("--method", choices=["model", "direct"])
    p.add_argument("--fock-cutoff", type=int)
    p.add_argument("--report", type=Path, help="JSON report")
    p.add_argument("--marginal", type=Path, help="marginal CSV for plotting")
    p.set_defaults(func=cmd_tomography)

    p = sub.add_parser("run-pipeline", help="all stages, clicks to W(0,0)")
    _common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--pulse-ns", type=float)
    p.add_argument("--n-pulses", type=int)
    p.add_argument("--n-windows", type=int, help="heralded and vacuum windows each")
    p.add_argument("--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_run_pipeline)

    p = sub.add_parser("report", help="print a saved pipeline report")
    p.add_argument("report", type=Path, help="report.json from run-pipeline")
    p.add_argument("--json", action="store_true", help="print the key-value form")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PipelineError as err:
        print(f"heraldsim {args.command}: stage {err.stage} failed: "
              f"{type(err.cause).__name__}: {err.cause}", file=sys.stderr)
    except (HeraldSimError, OSError) as err:
        print(f"heraldsim {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
