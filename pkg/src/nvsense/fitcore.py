"""Nonlinear least-squares estimators and spectral decomposition.

All curve fits run through a small damped Gauss-Newton solver with box
constraints: steps solve (J^T J + lam diag(J^T J)) dx = -J^T r and are only
accepted when the residual norm strictly decreases, otherwise the damping is
increased.  Standard errors come from the linearized covariance
sigma^2 (J^T J)^-1 at the solution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import noisebath, simkit
from .pulses import build_sequence, filter_peak_frequency

MAX_ITER = 200


class FitError(RuntimeError):
    """Raised when a fit cannot be run on the given data."""


@dataclass
class FitResult:
    """Estimated parameters with linearized standard errors."""

    model_id: str
    parameters: dict
    standard_errors: dict
    residual_norm: float
    n_points: int
    converged: bool

    def __getitem__(self, name):
        return self.parameters[name]


@dataclass(frozen=True)
class SpectrumSample:
    """One noise-spectrum estimate at a filter-peak frequency."""

    omega: float        # rad/s
    S: float            # rad^2/s
    n_pulses: int
    total_time: float   # s


def gauss_newton(residual_fn, x0, bounds=None, max_iter=MAX_ITER, xtol=1e-12, ftol=1e-14):
    """Damped Gauss-Newton with numeric Jacobian and box constraints.

    residual_fn(x) -> (weighted) residual vector.  Returns (x, rnorm, J,
    converged).  Accepted steps never increase the residual norm.
    """
    x = np.asarray(x0, dtype=float).copy()
    if bounds is not None:
        lo = np.asarray([b[0] for b in bounds], float)
        hi = np.asarray([b[1] for b in bounds], float)
        x = np.clip(x, lo, hi)

    def jac(x, r0):
        J = np.empty((r0.size, x.size))
        for j in range(x.size):
            h = 1e-7 * max(abs(x[j]), 1e-8)
            xp = x.copy()
            xp[j] += h
            if bounds is not None and xp[j] > hi[j]:
                xp[j] = x[j] - h
                h = -h
            J[:, j] = (residual_fn(xp) - r0) / h
        return J

    r = residual_fn(x)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    J = jac(x, r)
    for _ in range(max_iter):
        JTJ = J.T @ J
        g = J.T @ r
        D = np.diag(np.maximum(np.diag(JTJ), 1e-300))
        accepted = False
        stalled = False
        for _ in range(40):
            try:
                step = np.linalg.solve(JTJ + lam * D, -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            x_new = x + step
            if bounds is not None:
                x_new = np.clip(x_new, lo, hi)
            r_new = residual_fn(x_new)
            cost_new = float(r_new @ r_new)
            if cost_new <= cost * (1 + 1e-12):
                accepted = True
                break
            if np.linalg.norm(x_new - x) <= xtol * (np.linalg.norm(x) + xtol):
                # no descent possible beyond float noise: at a (possibly
                # bound-constrained) minimum
                stalled = True
                break
            lam *= 10
        if not accepted:
            converged = stalled
            break
        dx = np.linalg.norm(x_new - x)
        dcost = cost - cost_new
        x, r, cost = x_new, r_new, cost_new
        lam = max(lam / 10, 1e-12)
        J = jac(x, r)
        if dx <= xtol * (np.linalg.norm(x) + xtol) or dcost <= ftol * max(cost, 1.0):
            converged = True
            break
    return x, np.sqrt(cost), J, converged


def _standard_errors(J, rnorm, n_points, n_params):
    dof = n_points - n_params
    if dof <= 0:
        return np.full(n_params, np.inf)
    sigma2 = rnorm**2 / dof
    try:
        cov = sigma2 * np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        return np.full(n_params, np.inf)
    d = np.diag(cov)
    return np.sqrt(np.where(d > 0, d, np.inf))


# --- stretched exponential ----------------------------------------------------


def fit_stretched_exp(times, contrast, weights=None) -> FitResult:
    """Fit A exp[-(t/T2)^n] with n constrained to [0.5, 3].

    Multi-start over n in {0.8, 1.2, 1.8} guards against local minima.
    weights, when given, multiply the residuals (1/sigma convention).
    """
    times = np.asarray(times, dtype=float)
    contrast = np.asarray(contrast, dtype=float)
    if times.size < 5:
        raise FitError("stretched-exponential fit needs at least 5 points")
    if np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise FitError("times must be positive and strictly increasing")
    if np.ptp(contrast) == 0:
        raise FitError("degenerate data: constant contrast")
    w = np.ones_like(times) if weights is None else np.asarray(weights, dtype=float)

    A0 = max(float(np.max(contrast)), 1e-12)
    # crude T2 guess: first crossing of A0/e, else the middle of the sweep
    below = np.nonzero(contrast < A0 / np.e)[0]
    T2_0 = float(times[below[0]]) if below.size else float(times[times.size // 2])

    def residual(x):
        A, T2, n = x
        return w * (A * np.exp(-((times / T2) ** n)) - contrast)

    bounds = [(-np.inf, np.inf), (1e-12, np.inf), (0.5, 3.0)]
    best = None
    for n0 in (0.8, 1.2, 1.8):
        x, rnorm, J, ok = gauss_newton(residual, [A0, T2_0, n0], bounds=bounds)
        if best is None or rnorm < best[1]:
            best = (x, rnorm, J, ok)
    x, rnorm, J, ok = best
    if not ok:
        raise FitError("stretched-exponential fit did not converge")
    err = _standard_errors(J, rnorm, times.size, 3)
    return FitResult(
        model_id="stretched_exp",
        parameters={"A": x[0], "T2": x[1], "n": x[2]},
        standard_errors={"A": err[0], "T2": err[1], "n": err[2]},
        residual_norm=rnorm,
        n_points=times.size,
        converged=ok,
    )


# --- T2 vs pulse-number scaling ------------------------------------------------


def _saturation_model(N, T21, s, Nsat):
    # implemented verbatim as printed; does not reduce to T2(1) at N = 1
    return T21 * (Nsat**s + (N**s - Nsat**s) * np.exp(-N / Nsat))


def _power_model(N, T21, s):
    return T21 * N**s


def _aicc(rss, n, k):
    if n - k - 1 <= 0:
        return np.inf
    return n * np.log(max(rss, 1e-300) / n) + 2 * k + 2 * k * (k + 1) / (n - k - 1)


def fit_t2_vs_n(Ns, T2s, mode: str = "auto") -> FitResult:
    """Fit T2(N) to a saturation curve or a power law.

    Residuals are relative (model/data - 1) because T2 spans decades with
    roughly multiplicative scatter; an absolute fit would let the largest-N
    points dominate.  auto mode compares small-sample-corrected AIC with a
    2-unit preference toward the simpler power law.
    """
    Ns = np.asarray(Ns, dtype=float)
    T2s = np.asarray(T2s, dtype=float)
    if np.any(Ns <= 0) or np.any(Ns != np.round(Ns)):
        raise FitError("pulse numbers must be positive integers")
    if np.any(T2s <= 0):
        raise FitError("T2 values must be positive")
    if mode not in ("auto", "saturation", "power"):
        raise FitError(f"unknown mode {mode!r}")

    fits = {}
    if mode in ("auto", "power"):
        if Ns.size < 4:
            raise FitError("power-law fit needs at least 4 points")
        # log-space linear fit seeds the nonlinear solve
        s0, logT = np.polyfit(np.log(Ns), np.log(np.maximum(T2s, 1e-300)), 1)
        x, rnorm, J, ok = gauss_newton(
            lambda x: _power_model(Ns, *x) / T2s - 1.0, [np.exp(logT), s0],
            bounds=[(1e-12, np.inf), (-5.0, 5.0)],
        )
        err = _standard_errors(J, rnorm, Ns.size, 2)
        fits["power"] = FitResult(
            "t2n_power",
            {"T2_1": x[0], "s": x[1]},
            {"T2_1": err[0], "s": err[1]},
            rnorm, Ns.size, ok,
        )
    if mode in ("auto", "saturation"):
        if Ns.size < 5:
            raise FitError("saturation fit needs at least 5 points")
        best = None
        for Nsat0 in (np.median(Ns), np.max(Ns) / 4, np.max(Ns)):
            x, rnorm, J, ok = gauss_newton(
                lambda x: _saturation_model(Ns, *x) / T2s - 1.0,
                [T2s[0], 0.7, Nsat0],
                bounds=[(1e-12, np.inf), (-5.0, 5.0), (1e-6, np.inf)],
            )
            if best is None or rnorm < best[1]:
                best = (x, rnorm, J, ok)
        x, rnorm, J, ok = best
        err = _standard_errors(J, rnorm, Ns.size, 3)
        fits["saturation"] = FitResult(
            "t2n_saturation",
            {"T2_1": x[0], "s": x[1], "N_sat": x[2]},
            {"T2_1": err[0], "s": err[1], "N_sat": err[2]},
            rnorm, Ns.size, ok,
        )

    if mode == "power":
        chosen = fits["power"]
    elif mode == "saturation":
        chosen = fits["saturation"]
    else:
        aicc_pow = _aicc(fits["power"].residual_norm ** 2, Ns.size, 2)
        aicc_sat = _aicc(fits["saturation"].residual_norm ** 2, Ns.size, 3)
        chosen = fits["saturation"] if aicc_sat + 2.0 < aicc_pow else fits["power"]
    if not chosen.converged:
        raise FitError(f"{chosen.model_id} fit did not converge")
    return chosen


# --- stability fits -------------------------------------------------------------


def fit_exp_decay(times, values) -> FitResult:
    """Fit V0 * 2^(-t / half_life); constant data is flagged non-converged."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 3:
        raise FitError("exponential-decay fit needs at least 3 points")

    span = float(times[-1] - times[0])
    if np.ptp(values) <= 1e-12 * max(abs(np.mean(values)), 1e-300):
        return FitResult(
            "exp_decay",
            {"V0": float(np.mean(values)), "half_life": np.inf},
            {"V0": np.inf, "half_life": np.inf},
            0.0, times.size, False,
        )

    def residual(x):
        V0, hl = x
        return V0 * 2.0 ** (-times / hl) - values

    hl0 = max(span / 2, 1e-12)
    x, rnorm, J, ok = gauss_newton(
        residual, [values[0], hl0], bounds=[(1e-300, np.inf), (1e-9, np.inf)]
    )
    if x[1] > 1e6 * span:  # decay invisible over the sampled window
        ok = False
    err = _standard_errors(J, rnorm, times.size, 2)
    return FitResult(
        "exp_decay",
        {"V0": x[0], "half_life": x[1]},
        {"V0": err[0], "half_life": err[1]},
        rnorm, times.size, ok,
    )


def fit_linear(times, values) -> FitResult:
    """Ordinary least squares line with slope standard error.

    Two points interpolate exactly; the errors are then undefined and the
    result is flagged non-converged.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 2:
        raise FitError("linear fit needs at least 2 points")
    X = np.column_stack([np.ones_like(times), times])
    coef, *_ = np.linalg.lstsq(X, values, rcond=None)
    resid = values - X @ coef
    rnorm = float(np.linalg.norm(resid))
    dof = times.size - 2
    if dof > 0:
        sigma2 = rnorm**2 / dof
        cov = sigma2 * np.linalg.inv(X.T @ X)
        err = np.sqrt(np.diag(cov))
        ok = True
    else:
        err = np.array([np.inf, np.inf])
        ok = False
    return FitResult(
        "linear",
        {"intercept": coef[0], "slope": coef[1]},
        {"intercept": err[0], "slope": err[1]},
        rnorm, times.size, ok,
    )


# --- spectral decomposition ------------------------------------------------------


def white_noise_kappa(seq) -> float:
    """chi per unit white spectral density: (1/2 pi) int_0^inf |y~|^2 dw = T/2.

    Parseval for the +-1 toggling function; verified against quadrature in the
    test suite.
    """
    return seq.total_time / 2.0


def spectral_decompose(datasets, amplitude=None, c_min=0.05, c_max=0.95):
    """Invert CPMG decay data into noise-spectrum samples at the filter peaks.

    For each sweep point with pulse count N and total time t the measured
    dephasing chi = -ln(contrast / A) is divided by the white-noise response
    kappa(N, t), placing an estimate of S at omega0 = pi N / t.  The estimator
    is exact for white noise by construction.  A is the zero-time contrast:
    either passed explicitly (resonance-shaped sweeps) or taken from a
    stretched-exponential fit of each dataset.  Points outside [c_min, c_max]
    normalized coherence are skipped with a warning.
    """
    samples = []
    for ds in datasets:
        contrast = simkit.normalize_contrast(ds.F0_counts, ds.F1_counts)
        if amplitude is None:
            A = fit_stretched_exp(ds.sweep, contrast)["A"]
        else:
            A = float(amplitude)
        for t, n_pulses, c in zip(ds.sweep, ds.n_pulses, contrast):
            if n_pulses < 1:
                warnings.warn("skipping free-evolution point in spectral decomposition")
                continue
            c_norm = c / A
            if c_norm <= 0:
                warnings.warn(f"skipping noise-dominated point at t = {t:g} s")
                continue
            if not (c_min <= c_norm <= c_max):
                continue
            seq = build_sequence("cpmg", int(n_pulses), float(t))
            chi_meas = -np.log(c_norm)
            S_est = chi_meas / white_noise_kappa(seq)
            samples.append(
                SpectrumSample(
                    omega=filter_peak_frequency(seq),
                    S=float(S_est),
                    n_pulses=int(n_pulses),
                    total_time=float(t),
                )
            )
    samples.sort(key=lambda s: s.omega)
    return samples


def fit_proton_peak(samples, center: float, tau_h: float) -> float:
    """Integrate spectrum samples against the known proton-peak shape -> b_rms^2.

    Each sample carries chi_i = S_i * kappa(N_i, t_i).  With the peak shape
    known up to its area (double Lorentzian at +-center, width 1/tau_h), chi
    is linear in b_rms^2, so the matched linear inversion
    b^2 = sum(chi_i m_i) / sum(m_i^2) with m_i the unit-b^2 forward response
    recovers the peak area without white-noise or window-truncation bias.
    """
    if not samples:
        raise FitError("no spectrum samples to invert")
    unit_peak = noisebath.ProtonBathPeak(b_rms_sq=1.0, center=center, tau_h=tau_h)
    chis = np.empty(len(samples))
    m = np.empty(len(samples))
    for i, s in enumerate(samples):
        seq = build_sequence("cpmg", s.n_pulses, s.total_time)
        chis[i] = s.S * white_noise_kappa(seq)
        m[i] = noisebath.chi(seq, unit_peak)
    denom = float(m @ m)
    if denom == 0:
        raise FitError("forward response vanishes at every probe")
    b2 = float(chis @ m) / denom
    if b2 <= 0:
        raise FitError("fitted proton-peak area is not positive")
    return b2


def t2_change_stats(before, after) -> dict:
    """Per-NV percent T2 reduction: mean and sample standard deviation."""
    before = np.asarray(before, dtype=float)
    after = np.asarray(after, dtype=float)
    if before.shape != after.shape or before.size == 0:
        raise FitError("before/after lists must be nonempty and equal length")
    reduction = 100.0 * (1.0 - after / before)
    out = {"mean_percent": float(np.mean(reduction))}
    if reduction.size > 1:
        out["std_percent"] = float(np.std(reduction, ddof=1))
    else:
        out["std_percent"] = np.nan
    return out
