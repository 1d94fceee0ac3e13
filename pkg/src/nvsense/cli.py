"""Command-line frontend.

Subcommands tie the pipeline together through documented CSV/JSON formats;
report-producing commands can additionally render a matplotlib figure next to
the delimited output via --plot.  Every subcommand is deterministic given
(config, seed).  Exit codes: 0 success, 2 validation error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dataio, fieldcal, fitcore, noisebath, plots, simkit, smassay
from .config import ConfigError, load_config
from .dataio import SchemaError
from .noisebath import QuadratureError
from .pulses import build_sequence


def _add_config(p):
    p.add_argument("--config", help="INI run configuration (defaults used if omitted)")
    p.add_argument("--seed", type=int, help="override the config master seed")


def _cfg(args):
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg.master_seed = args.seed
    return cfg


# --- subcommand implementations -------------------------------------------------


def cmd_simulate(args):
    cfg = _cfg(args)
    if args.tmin_us <= 0 or args.tmax_us <= args.tmin_us:
        raise ValueError("need 0 < tmin-us < tmax-us")
    if args.spacing == "log":
        times = np.geomspace(args.tmin_us, args.tmax_us, args.points) * 1e-6
    else:
        times = np.linspace(args.tmin_us, args.tmax_us, args.points) * 1e-6
    seqs = [build_sequence(args.family, args.n_pulses, t) for t in times]
    ds = simkit.simulate_dd_dataset(seqs, cfg.bath(), cfg.readout(), args.reps, cfg.master_seed)
    dataio.write_dataset_csv(ds, args.out)
    if args.plot:
        contrast = simkit.normalize_contrast(ds.F0_counts, ds.F1_counts)
        plots.plot_coherence(ds.sweep * 1e6, contrast, args.plot)
    return 0


def cmd_fit_coherence(args):
    ds = dataio.read_dataset_csv(args.infile)
    contrast = simkit.normalize_contrast(ds.F0_counts, ds.F1_counts)
    weights = 1.0 / np.sqrt(simkit.contrast_variance(ds.F0_counts, ds.F1_counts))
    fit = fitcore.fit_stretched_exp(ds.sweep, contrast, weights)
    dataio.write_json(
        {
            "model_id": fit.model_id,
            "T2_us": fit["T2"] * 1e6,
            "n": fit["n"],
            "A": fit["A"],
            "stderr_T2_us": fit.standard_errors["T2"] * 1e6,
            "stderr_n": fit.standard_errors["n"],
            "stderr_A": fit.standard_errors["A"],
            "residual_norm": fit.residual_norm,
            "n_points": fit.n_points,
            "converged": fit.converged,
        },
        args.out,
    )
    if args.plot:
        plots.plot_coherence(ds.sweep * 1e6, contrast, args.plot, fit=fit)
    return 0


def cmd_fit_t2n(args):
    Ns, T2s = dataio.read_t2n_csv(args.infile)
    mode = {"sat": "saturation"}.get(args.mode, args.mode)
    fit = fitcore.fit_t2_vs_n(Ns, T2s, mode=mode)
    payload = {
        "model_id": fit.model_id,
        "residual_norm": fit.residual_norm,
        "n_points": fit.n_points,
        "converged": fit.converged,
    }
    for k, v in fit.parameters.items():
        key = "T2_1_us" if k == "T2_1" else k
        payload[key] = v * 1e6 if k == "T2_1" else v
        payload["stderr_" + key] = (
            fit.standard_errors[k] * 1e6 if k == "T2_1" else fit.standard_errors[k]
        )
    dataio.write_json(payload, args.out)
    if args.plot:
        plots.plot_t2n(Ns, T2s * 1e6, args.plot, fit=fit)
    return 0


def _decompose_dir(args, cfg):
    paths = sorted(Path(args.indir).glob("*.csv"))
    if not paths:
        raise ValueError(f"no CSV datasets found in {args.indir}")
    datasets = [dataio.read_dataset_csv(p) for p in paths]
    amplitude = cfg.readout().max_contrast if args.known_amplitude else None
    return fitcore.spectral_decompose(datasets, amplitude=amplitude)


def cmd_spectrum(args):
    cfg = _cfg(args)
    samples = _decompose_dir(args, cfg)
    dataio.write_spectrum_csv(samples, args.out)
    if args.plot:
        plots.plot_spectrum(samples, args.plot)
    return 0


def cmd_depth(args):
    cfg = _cfg(args)
    samples = _decompose_dir(args, cfg)
    center = fieldcal.proton_larmor(cfg.b0_tesla)
    b2 = fitcore.fit_proton_peak(samples, center, args.tau_h_us * 1e-6)
    depth = fieldcal.depth_from_brms(b2, args.rho_h)
    dataio.write_json(
        {
            "depth_nm": depth * 1e9,
            "b_rms_sq_T2": b2,
            "b_rms_uT": np.sqrt(b2) * 1e6,
            "rho_h_per_m3": args.rho_h,
            "larmor_MHz": center / (2e6 * np.pi),
            "n_samples": len(samples),
        },
        args.out,
    )
    return 0


def cmd_sense(args):
    cfg = _cfg(args)
    budget = cfg.sensing_budget()
    res = fieldcal.integration_time(budget)
    dataio.write_json(
        {
            "tau_opt_us": res["tau_opt"] * 1e6,
            "T_required_s": res["T_required"],
            "snr_target": budget.snr_target,
            "t_read_us": budget.t_read * 1e6,
            "n": budget.n,
            "n_logic": budget.n_logic,
            "T2_us": budget.T2 * 1e6,
            "A_hz": budget.A / (2 * np.pi),
        },
        args.out,
    )
    return 0


def cmd_smassay_synth(args):
    cfg = _cfg(args)
    frame = smassay.synth_image(
        density=args.density,
        fov_area=args.fov_area,
        pixel_pitch=cfg.pixel_pitch_um,
        psf_sigma=cfg.psf_sigma_px,
        photons_per_spot=args.photons,
        bg_per_px=args.background,
        seed=cfg.master_seed,
    )
    if args.out.endswith(".png"):
        dataio.write_image_png(frame, args.out)
    else:
        dataio.write_image_csv(frame, args.out)
    return 0


def cmd_smassay_detect(args):
    cfg = _cfg(args)
    if args.infile.endswith(".png"):
        frame = dataio.read_image_png(args.infile, cfg.pixel_pitch_um)
    else:
        frame = dataio.read_image_csv(args.infile)
    params = smassay.DetectParams(
        sigma_small=cfg.psf_sigma_px,
        sigma_large=3 * cfg.psf_sigma_px,
        threshold_sigmas=args.threshold,
    )
    positions, aggregates = smassay.detect_spots(frame, params)
    point = smassay.estimate_density(len(positions), frame.area)
    dataio.write_json(
        {
            "n_spots": len(positions),
            "n_aggregates_excluded": aggregates,
            "area_um2": frame.area,
            "density_per_um2": point.density,
            "density_ci95": [point.ci_low, point.ci_high],
            "positions_px": [[float(r), float(c)] for r, c in positions],
        },
        args.out,
    )
    return 0


def cmd_smassay_titrate(args):
    rows = dataio.read_titration_csv(args.infile)
    points = [smassay.estimate_density(n, area, biotin_fraction=fr) for fr, n, area in rows]
    fit = smassay.fit_titration(points)
    dataio.write_json(
        {
            "rho_ns_per_um2": fit["rho_ns"],
            "slope_per_um2": fit["slope"],
            "dynamic_range": fit["dynamic_range"],
            "n_points": len(points),
        },
        args.out,
    )
    if args.plot:
        plots.plot_titration(points, fit, args.plot)
    return 0


def cmd_smassay_trace(args):
    traces = dataio.read_trace_csv(args.infile)
    results = {}
    last = None
    for tr in traces:
        res = smassay.classify_steps(tr, threshold=args.threshold)
        results[str(tr.spot_id)] = res
        last = (tr, res)
    dataio.write_json({"traces": results}, args.out)
    if args.plot and last is not None:
        plots.plot_trace(*last, args.plot)
    return 0


def cmd_smassay_stability(args):
    rows = dataio._parse_csv(args.infile, "day,value", (float, float))
    if not rows:
        raise SchemaError(f"{args.infile}: no data rows")
    times = np.array([r[0] for r in rows])
    values = np.array([r[1] for r in rows])
    fit = smassay.stability_pipeline(times, values, args.kind)
    payload = {
        "model_id": fit.model_id,
        "converged": fit.converged,
        "n_points": fit.n_points,
    }
    if args.kind == "counts":
        payload["half_life_days"] = fit["half_life"]
        payload["stderr_half_life_days"] = fit.standard_errors["half_life"]
    else:
        payload["rate_nm_per_day"] = fit["slope"]
        payload["stderr_rate_nm_per_day"] = fit.standard_errors["slope"]
    payload = {k: (v if np.isfinite(np.asarray(v, dtype=float)).all() else None)
               if isinstance(v, (int, float)) else v for k, v in payload.items()}
    dataio.write_json(payload, args.out)
    if args.plot:
        plots.plot_stability(times, values, fit, args.plot)
    return 0


def cmd_smassay_roughness(args):
    hmap = dataio.read_heightmap_csv(args.infile)
    dataio.write_json({"Ra_pm": smassay.roughness_Ra(hmap)}, args.out)
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nvsense",
        description="NV-center sensing simulator and single-molecule assay analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a dynamical-decoupling dataset CSV")
    _add_config(p)
    p.add_argument("--family", choices=["free", "echo", "cpmg"], default="cpmg")
    p.add_argument("--n-pulses", type=int, default=64)
    p.add_argument("--tmin-us", type=float, default=1.0)
    p.add_argument("--tmax-us", type=float, default=100.0)
    p.add_argument("--points", type=int, default=40)
    p.add_argument("--spacing", choices=["log", "linear"], default="log")
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--plot")
    p.add_argument("out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-coherence", help="stretched-exponential fit of a dataset CSV")
    p.add_argument("infile")
    p.add_argument("out")
    p.add_argument("--plot")
    p.set_defaults(func=cmd_fit_coherence)

    p = sub.add_parser("fit-t2n", help="T2(N) saturation / power-law fit")
    p.add_argument("infile")
    p.add_argument("out")
    p.add_argument("--mode", choices=["auto", "sat", "saturation", "power"], default="auto")
    p.add_argument("--plot")
    p.set_defaults(func=cmd_fit_t2n)

    p = sub.add_parser("spectrum", help="spectral decomposition of a directory of datasets")
    _add_config(p)
    p.add_argument("indir")
    p.add_argument("out")
    p.add_argument("--known-amplitude", action="store_true",
                   help="use the config readout contrast as the zero-time amplitude")
    p.add_argument("--plot")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("depth", help="NV depth from proton-peak probe datasets")
    _add_config(p)
    p.add_argument("indir")
    p.add_argument("out")
    p.add_argument("--rho-h", type=float, default=fieldcal.RHO_H_DEFAULT,
                   help="proton number density of the oil, m^-3")
    p.add_argument("--tau-h-us", type=float, default=fieldcal.TAU_H_DEFAULT * 1e6)
    p.add_argument("--known-amplitude", action="store_true", default=True)
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("sense", help="single-13C integration-time budget")
    _add_config(p)
    p.add_argument("out")
    p.set_defaults(func=cmd_sense)

    sm = sub.add_parser("smassay", help="single-molecule assay pipelines")
    smsub = sm.add_subparsers(dest="smassay_command", required=True)

    p = smsub.add_parser("synth", help="render a synthetic fluorescence frame")
    _add_config(p)
    p.add_argument("--density", type=float, required=True, help="emitters per um^2")
    p.add_argument("--fov-area", type=float, default=2800.0, help="um^2")
    p.add_argument("--photons", type=float, default=2000.0)
    p.add_argument("--background", type=float, default=50.0)
    p.add_argument("out", help=".png (16-bit) or .csv grid")
    p.set_defaults(func=cmd_smassay_synth)

    p = smsub.add_parser("detect", help="detect spots and estimate density")
    _add_config(p)
    p.add_argument("infile")
    p.add_argument("out")
    p.add_argument("--threshold", type=float, default=4.0, help="sigma units")
    p.set_defaults(func=cmd_smassay_detect)

    p = smsub.add_parser("titrate", help="adsorption-density titration fit")
    p.add_argument("infile", help="CSV: biotin_fraction,n_spots,area_um2")
    p.add_argument("out")
    p.add_argument("--plot")
    p.set_defaults(func=cmd_smassay_titrate)

    p = smsub.add_parser("trace", help="classify photobleach steps in trace CSV")
    p.add_argument("infile")
    p.add_argument("out")
    p.add_argument("--threshold", type=float, default=smassay.STEP_T_THRESHOLD)
    p.add_argument("--plot")
    p.set_defaults(func=cmd_smassay_trace)

    p = smsub.add_parser("stability", help="fit a stability time series")
    p.add_argument("infile", help="CSV: day,value")
    p.add_argument("out")
    p.add_argument("--kind", choices=["counts", "thickness"], required=True)
    p.add_argument("--plot")
    p.set_defaults(func=cmd_smassay_stability)

    p = smsub.add_parser("roughness", help="Ra of a height-map CSV")
    p.add_argument("infile")
    p.add_argument("out")
    p.set_defaults(func=cmd_smassay_roughness)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SchemaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (QuadratureError, fitcore.FitError, np.linalg.LinAlgError,
            FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
