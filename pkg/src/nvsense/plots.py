"""Report figures rendered next to the delimited outputs.

All figures go through savefig() with a fixed SVG hash salt and no embedded
timestamps so repeated runs produce identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "nvsense"

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.savefig(path, metadata={"Date": None}, dpi=150)
    plt.close(fig)


def plot_coherence(times_us, contrast, path, fit=None):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(times_us, contrast, "o", ms=4, label="data")
    if fit is not None:
        t = np.linspace(min(times_us), max(times_us), 300)
        p = fit.parameters
        ax.plot(t, p["A"] * np.exp(-((t / (p["T2"] * 1e6)) ** p["n"])), "-",
                label=f"T2 = {p['T2'] * 1e6:.1f} us, n = {p['n']:.2f}")
        ax.legend(frameon=False)
    ax.set_xlabel("evolution time (us)")
    ax.set_ylabel("spin contrast")
    fig.tight_layout()
    _save(fig, path)


def plot_spectrum(samples, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    f = [s.omega / (2e6 * np.pi) for s in samples]
    S = [s.S for s in samples]
    ax.loglog(f, S, "o-", ms=4)
    ax.set_xlabel("frequency (MHz)")
    ax.set_ylabel("S (rad$^2$/s)")
    fig.tight_layout()
    _save(fig, path)


def plot_t2n(Ns, T2s_us, path, fit=None):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(Ns, T2s_us, "o", ms=5, label="data")
    if fit is not None:
        from .fitcore import _power_model, _saturation_model

        N = np.geomspace(min(Ns), max(Ns), 200)
        p = fit.parameters
        if fit.model_id == "t2n_power":
            y = _power_model(N, p["T2_1"], p["s"])
        else:
            y = _saturation_model(N, p["T2_1"], p["s"], p["N_sat"])
        ax.loglog(N, y * 1e6 if max(T2s_us) > 1e-3 else y, "-", label=fit.model_id)
        ax.legend(frameon=False)
    ax.set_xlabel("number of pi pulses")
    ax.set_ylabel("T2 (us)")
    fig.tight_layout()
    _save(fig, path)


def plot_titration(points, fit, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    fr = np.array([max(p.biotin_fraction, 1e-5) for p in points])
    dens = np.array([p.density for p in points])
    err = np.array([[p.density - p.ci_low for p in points],
                    [p.ci_high - p.density for p in points]])
    ax.errorbar(fr, dens, yerr=err, fmt="o", ms=4, capsize=3)
    x = np.geomspace(fr.min(), fr.max(), 100)
    ax.plot(x, fit["rho_ns"] + fit["slope"] * x, "-", color="gray")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("functional-PEG fraction")
    ax.set_ylabel("density (um$^{-2}$)")
    fig.tight_layout()
    _save(fig, path)


def plot_stability(times, values, fit, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(times, values, "o", ms=5)
    t = np.linspace(min(times), max(times), 200)
    p = fit.parameters
    if fit.model_id == "exp_decay" and np.isfinite(p["half_life"]):
        ax.plot(t, p["V0"] * 2.0 ** (-t / p["half_life"]), "-", color="gray")
    elif fit.model_id == "linear":
        ax.plot(t, p["intercept"] + p["slope"] * t, "-", color="gray")
    ax.set_xlabel("time (days)")
    ax.set_ylabel("signal")
    fig.tight_layout()
    _save(fig, path)


def plot_trace(trace, result, path):
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(trace.times, trace.intensity, "-", lw=0.8)
    for t in result["step_times"]:
        ax.axvline(t, color="crimson", ls="--", lw=1)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("intensity (a.u.)")
    ax.set_title(f"{result['n_steps']} bleach step(s)")
    fig.tight_layout()
    _save(fig, path)
