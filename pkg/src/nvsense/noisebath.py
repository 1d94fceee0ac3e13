"""Parametric noise spectra and the decoherence functional.

Spectra are one-sided in angular frequency and normalized so that

    (1/pi) int_0^inf S(omega) d omega = variance of the noise process.

With that convention the autocorrelation is C(tau) = (1/pi) int S cos(w tau) dw
and Gaussian dephasing under a pulse sequence is

    chi = <phi^2>/2 = (1/2 pi) int_0^inf S(omega) |y~(omega)|^2 d omega,

which reproduces the textbook Ornstein-Uhlenbeck free-evolution result
chi(t) = V tau_c^2 (t/tau_c - 1 + exp(-t/tau_c)) and is validated against a
time-domain Monte Carlo average <cos phi> = exp(-chi).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from . import fieldcal
from .constants import GAMMA_E, GAMMA_H, OMEGA_REF
from .pulses import PulseSequence, build_sequence, filter_weight

# forced quadrature nodes at filter-peak harmonics up to this order
PEAK_HARMONICS = 9
QUAD_RTOL = 1e-4


class QuadratureError(RuntimeError):
    """Raised when the decoherence integral fails to converge."""


@dataclass(frozen=True)
class Lorentzian:
    """Ornstein-Uhlenbeck bath: S(w) = variance * 2 tau_c / (1 + (w tau_c)^2)."""

    variance: float   # rad^2/s^2
    tau_c: float      # s

    def density(self, omega):
        omega = _check_omega(omega)
        return self.variance * 2 * self.tau_c / (1 + (omega * self.tau_c) ** 2)

    def breakpoints(self):
        return [1.0 / self.tau_c]

    def char_frequency(self):
        return 1.0 / self.tau_c


@dataclass(frozen=True)
class PowerLaw:
    """S(w) = amplitude * (w / OMEGA_REF)^(-exponent); amplitude in rad^2/s.

    Note: under free evolution the dephasing integral diverges for
    exponent >= 1 (the filter weight stays finite at w = 0); chi() reports
    that as a QuadratureError. Echo and CPMG suppress the infrared end and
    converge for exponent < 3.
    """

    amplitude: float
    exponent: float
    omega0: float = OMEGA_REF

    def density(self, omega):
        omega = _check_omega(omega)
        return self.amplitude * (omega / self.omega0) ** (-self.exponent)

    def breakpoints(self):
        return [self.omega0]

    def char_frequency(self):
        return self.omega0


@dataclass(frozen=True)
class ProtonBathPeak:
    """Proton Larmor peak: symmetric double Lorentzian at +-center, width 1/tau_h.

    Normalized so (1/pi) int_0^inf S dw -> GAMMA_E^2 * b_rms_sq as
    tau_h * center -> inf (the variance of the dephasing noise the protons
    impose on the NV).
    """

    b_rms_sq: float   # T^2
    center: float     # rad/s
    tau_h: float      # s

    def density(self, omega):
        omega = _check_omega(omega)
        th = self.tau_h
        lor = th / (1 + ((omega - self.center) * th) ** 2) + th / (
            1 + ((omega + self.center) * th) ** 2
        )
        return GAMMA_E**2 * self.b_rms_sq * lor

    def breakpoints(self):
        pts = [self.center + k / self.tau_h for k in (-3, -1, 0, 1, 3)]
        return [p for p in pts if p > 0]

    def char_frequency(self):
        return self.center + 3.0 / self.tau_h


@dataclass(frozen=True)
class SumSpectrum:
    """Pointwise sum of component spectra."""

    terms: tuple

    def density(self, omega):
        omega = _check_omega(omega)
        return sum(t.density(omega) for t in self.terms)

    def breakpoints(self):
        pts = []
        for t in self.terms:
            pts.extend(t.breakpoints())
        return pts

    def char_frequency(self):
        return max(t.char_frequency() for t in self.terms)


def _check_omega(omega):
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("omega must be nonnegative")
    return omega


def spectral_density(model, omega):
    """S(omega) in rad^2/s for any spectrum model."""
    return model.density(omega)


@dataclass
class CoherenceCurve:
    """Simulated coherence C(t) for one sequence family."""

    times: np.ndarray
    coherence: np.ndarray
    label: str
    n_pulses: int = 0


def _quad_panels(seq: PulseSequence, model):
    """Panel edges for the chi quadrature: filter harmonics + spectrum features.

    Beyond the tracked harmonics the filter weight still oscillates on the
    2 pi / t scale, so the tail is chopped into panels holding a bounded
    number of oscillations each; otherwise quad stalls on the long interval.
    """
    t = seq.total_time
    n_eff = max(seq.n_pulses, 1)
    peaks = [np.pi * k * n_eff / t for k in range(1, PEAK_HARMONICS + 1)]
    omega_max = max(100.0 * n_eff / t, 10.0 * model.char_frequency())
    pts = sorted(set(p for p in peaks + list(model.breakpoints()) if 0 < p < omega_max))
    edges = [0.0] + pts + [omega_max]
    # a few filter oscillations per panel, capped at 2000 extra panels
    step = max(4 * 2 * np.pi / t, (omega_max - edges[0]) / 2000)
    refined = [edges[0]]
    for b in edges[1:]:
        a = refined[-1]
        if b - a > 1.5 * step:
            refined.extend(np.arange(a + step, b - 0.5 * step, step).tolist())
        refined.append(b)
    return refined


# Gauss-Legendre nodes reused across chi calls: low and high order per panel
_GL_LO = np.polynomial.legendre.leggauss(20)
_GL_HI = np.polynomial.legendre.leggauss(40)


def _panel_gauss(integrand, lo, hi, nodes, weights):
    """Vectorized fixed-order Gauss-Legendre over a batch of panels."""
    lo = lo[:, None]
    half = 0.5 * (hi[:, None] - lo)
    w = lo + half * (nodes[None, :] + 1.0)
    f = integrand(w.ravel()).reshape(w.shape)
    return (f * weights[None, :]).sum(axis=1) * half[:, 0]


def chi(seq: PulseSequence, model) -> float:
    """Dephasing exponent chi = (1/2 pi) int_0^inf S(w) |y~(w)|^2 dw.

    Panels split at the filter-peak harmonics and the spectrum's own feature
    frequencies are integrated by nested fixed-order Gauss rules, with
    adaptive quadrature as the fallback on panels where the two orders
    disagree; raises QuadratureError instead of silently truncating when the
    overall error budget is exceeded.
    """

    def integrand(w):
        return model.density(w) * filter_weight(seq, w)

    edges = np.asarray(_quad_panels(seq, model))
    lo, hi = edges[:-1], edges[1:]
    coarse = _panel_gauss(integrand, lo, hi, *_GL_LO)
    fine = _panel_gauss(integrand, lo, hi, *_GL_HI)
    diff = np.abs(fine - coarse)
    scale = float(np.max(np.abs(fine)))
    epsabs = max(scale, 1e-300) * 1e-7

    # far past the tracked harmonics the filter weight oscillates around the
    # jump-dominated mean (4n + 2)/w^2; panels holding very many oscillations
    # are integrated against that envelope instead of the raw oscillation
    t = seq.total_time
    last_harmonic = np.pi * PEAK_HARMONICS * max(seq.n_pulses, 1) / t
    mean_weight = 4 * seq.n_pulses + 2

    def envelope(w):
        return model.density(w) * mean_weight / w**2

    n_osc = (hi - lo) * t / (2 * np.pi)
    total = 0.0
    err_total = 0.0
    for k in range(lo.size):
        if diff[k] <= max(QUAD_RTOL * abs(fine[k]), epsabs):
            total += float(fine[k])
            err_total += float(diff[k])
            continue
        if lo[k] >= 0.999 * last_harmonic and n_osc[k] >= 50:
            seg = np.array([lo[k]]), np.array([hi[k]])
            val = float(_panel_gauss(envelope, *seg, *_GL_HI))
            chk = float(_panel_gauss(envelope, *seg, *_GL_LO))
            total += val
            err_total += abs(val - chk) + abs(val) / n_osc[k]
            continue
        res = integrate.quad(
            integrand, lo[k], hi[k], epsabs=epsabs, epsrel=QUAD_RTOL,
            limit=200, full_output=1,
        )
        total += res[0]
        err_total += abs(res[1])
    # judge accuracy on the whole integral, not panel by panel: individual
    # oscillatory panels may be roundoff-limited yet negligible overall
    if not (err_total <= max(10 * QUAD_RTOL * abs(total), 1e4 * epsabs)):
        raise QuadratureError(
            f"decoherence integral error {err_total:g} exceeds tolerance "
            f"for total {total:g}"
        )
    if total < 0:
        raise QuadratureError(f"decoherence integral came out negative: {total:g}")
    return total / (2 * np.pi)


def coherence(seq: PulseSequence, model) -> float:
    """C = exp(-chi), in (0, 1]."""
    return float(np.exp(-chi(seq, model)))


def t2_of_model(label: str, n_pulses: int, model, t_lo: float = 1e-9, t_hi: float = 1.0) -> float:
    """1/e coherence time: solves chi(total_time) = 1 for the sequence family.

    Scans a log grid for a bracket inside [t_lo, t_hi], then refines by
    bracketed root finding to 1e-6 relative.
    """

    def g(t):
        return chi(build_sequence(label, n_pulses, t), model) - 1.0

    # expand geometrically around a physically sensible start; chi is
    # monotone increasing in t for fixed family, so one sign change suffices
    t0 = min(max(1e-6, t_lo), t_hi)
    v0 = g(t0)
    bracket = None
    if v0 == 0.0:
        return float(t0)
    step = 4.0 if v0 < 0 else 0.25
    t_prev, v_prev, t_cur = t0, v0, t0
    while (t_lo < t_cur < t_hi) or t_cur == t0:
        t_cur = min(max(t_prev * step, t_lo), t_hi)
        if t_cur == t_prev:
            break
        v_cur = g(t_cur)
        if v_cur == 0.0:
            return float(t_cur)
        if v_prev * v_cur < 0:
            bracket = (min(t_prev, t_cur), max(t_prev, t_cur))
            break
        t_prev, v_prev = t_cur, v_cur
    if bracket is None:
        raise ValueError(f"no T2 bracket found in [{t_lo:g}, {t_hi:g}] s")
    return float(optimize.brentq(g, *bracket, rtol=1e-6))


def proton_bath_spectrum(rho_h: float, depth: float, B0: float, tau_h: float) -> ProtonBathPeak:
    """Proton-bath noise peak for an NV at the given depth below the oil.

    Center frequency is the proton Larmor gamma_H * B0; the rms field squared
    follows the half-space dipolar geometry b_rms^2 = K * rho_h / depth^3.
    """
    if rho_h <= 0 or depth <= 0 or B0 <= 0 or tau_h <= 0:
        raise ValueError("rho_h, depth, B0, tau_h must all be positive")
    return ProtonBathPeak(
        b_rms_sq=fieldcal.brms_from_depth(depth, rho_h),
        center=GAMMA_H * B0,
        tau_h=tau_h,
    )
