import time

import numpy as np
import pytest
from scipy import integrate

from nvsense.fitcore import (
    FitError,
    SpectrumSample,
    fit_exp_decay,
    fit_linear,
    fit_proton_peak,
    fit_stretched_exp,
    fit_t2_vs_n,
    gauss_newton,
    spectral_decompose,
    t2_change_stats,
    white_noise_kappa,
)
from nvsense.noisebath import Lorentzian, ProtonBathPeak, chi
from nvsense.pulses import build_sequence, filter_weight
from nvsense.simkit import ExperimentDataset, ReadoutModel

READOUT = ReadoutModel(f0=0.063, f1=0.048)


def dataset_from_coherence(times, n_pulses, cvals, reps=10**9):
    """Deterministic expected-count dataset (no shot noise)."""
    times = np.asarray(times, float)
    cvals = np.asarray(cvals, float)
    p = 0.5 * (1 + cvals)
    f0, f1 = READOUT.f0, READOUT.f1
    F0 = np.rint(reps * (f1 + (f0 - f1) * p)).astype(np.int64)
    F1 = np.rint(reps * (f1 + (f0 - f1) * (1 - p))).astype(np.int64)
    n = np.broadcast_to(np.asarray(n_pulses, int), times.shape)
    return ExperimentDataset(times, n, F0, F1, reps, seed=0)


class TestGaussNewton:
    def test_residual_norm_monotone_in_iterations(self):
        # each extra iteration only appends accepted (non-increasing) steps
        t = np.linspace(0.1, 5, 30)
        y = 2.0 * np.exp(-t / 1.3) + 0.05 * np.sin(7 * t)

        def residual(x):
            return x[0] * np.exp(-t / x[1]) - y

        rnorms = [
            gauss_newton(residual, [0.5, 4.0], max_iter=k)[1] for k in range(1, 12)
        ]
        assert np.all(np.diff(rnorms) <= 1e-12)

    def test_never_worse_than_start(self):
        rng = np.random.default_rng(0)
        t = np.linspace(0.1, 5, 25)
        y = 1.5 * np.exp(-((t / 2.0) ** 1.3)) + 0.02 * rng.normal(size=t.size)

        def residual(x):
            return x[0] * np.exp(-((t / x[1]) ** x[2])) - y

        for x0 in ([0.1, 0.5, 0.6], [3.0, 4.0, 2.5], [1.0, 1.0, 1.0]):
            r0 = residual(np.array(x0))
            _, rnorm, _, _ = gauss_newton(residual, x0, bounds=[(1e-6, 10)] * 3)
            assert rnorm <= np.linalg.norm(r0) + 1e-12

    def test_respects_bounds(self):
        t = np.linspace(0.1, 3, 20)
        y = np.exp(-((t / 1.0) ** 2.9))  # optimum near the n upper bound

        def residual(x):
            return np.exp(-((t / x[0]) ** x[1])) - y

        x, _, _, ok = gauss_newton(residual, [1.0, 1.0], bounds=[(0.1, 5), (0.5, 2.0)])
        assert ok
        assert 0.5 <= x[1] <= 2.0


class TestStretchedExp:
    def test_noiseless_recovery(self):
        times = np.linspace(2e-6, 90e-6, 40)
        truth = dict(A=0.27, T2=31e-6, n=1.4)
        contrast = truth["A"] * np.exp(-((times / truth["T2"]) ** truth["n"]))
        fit = fit_stretched_exp(times, contrast)
        assert fit.converged
        for k, v in truth.items():
            assert fit[k] == pytest.approx(v, rel=1e-6)

    def test_reference_scales(self):
        times = np.linspace(2e-6, 150e-6, 40)
        for T2 in (47e-6, 31e-6):
            contrast = 0.25 * np.exp(-((times / T2) ** 1.2))
            assert fit_stretched_exp(times, contrast)["T2"] == pytest.approx(T2, rel=1e-6)

    def test_amplitude_is_plateau(self):
        times = np.linspace(0.5e-6, 200e-6, 60)
        contrast = 0.19 * np.exp(-((times / 40e-6) ** 1.8))
        assert fit_stretched_exp(times, contrast)["A"] == pytest.approx(0.19, rel=1e-6)

    def test_exponent_stays_in_bounds(self):
        times = np.linspace(1e-6, 50e-6, 30)
        contrast = 0.27 * np.exp(-((times / 20e-6) ** 4.0))  # steeper than allowed
        fit = fit_stretched_exp(times, contrast)
        assert 0.5 <= fit["n"] <= 3.0

    def test_weighted_fit_downweights_tail(self):
        times = np.linspace(2e-6, 90e-6, 40)
        contrast = 0.27 * np.exp(-((times / 31e-6) ** 1.2))
        contrast[-1] += 0.2  # corrupted tail point
        w = np.ones_like(times)
        w[-1] = 1e-6
        fit = fit_stretched_exp(times, contrast, weights=w)
        assert fit["T2"] == pytest.approx(31e-6, rel=1e-3)

    def test_too_few_points(self):
        with pytest.raises(FitError):
            fit_stretched_exp([1e-6, 2e-6, 3e-6, 4e-6], [0.2, 0.15, 0.1, 0.05])

    def test_nonincreasing_times_rejected(self):
        times = [1e-6, 2e-6, 2e-6, 3e-6, 4e-6]
        with pytest.raises(FitError):
            fit_stretched_exp(times, [0.2, 0.18, 0.15, 0.1, 0.05])

    def test_constant_contrast_rejected(self):
        times = np.linspace(1e-6, 5e-6, 6)
        with pytest.raises(FitError):
            fit_stretched_exp(times, np.full(6, 0.2))

    def test_forty_point_fit_is_fast(self):
        times = np.linspace(2e-6, 90e-6, 40)
        contrast = 0.27 * np.exp(-((times / 31e-6) ** 1.4))
        fit_stretched_exp(times, contrast)  # warm caches
        t0 = time.perf_counter()
        fit_stretched_exp(times, contrast)
        assert time.perf_counter() - t0 < 0.05


class TestT2VsN:
    def test_power_zero_exponent_constant(self):
        Ns = np.array([1, 2, 4, 8, 16])
        fit = fit_t2_vs_n(Ns, np.full(5, 10e-6), mode="power")
        assert fit["s"] == pytest.approx(0.0, abs=1e-9)
        assert fit["T2_1"] == pytest.approx(10e-6, rel=1e-9)

    def test_power_at_n_equal_one(self):
        Ns = np.array([1, 2, 4, 8, 16, 32])
        T2s = 10e-6 * Ns**0.66
        fit = fit_t2_vs_n(Ns, T2s, mode="power")
        assert fit["T2_1"] * 1**fit["s"] == pytest.approx(10e-6, rel=1e-9)
        assert fit["s"] == pytest.approx(0.66, rel=1e-9)

    def test_saturation_simulate_then_fit(self):
        Ns = 2 ** np.arange(8)  # 1 .. 128
        T21, s, Nsat = 10e-6, 0.7, 30.0
        truth = T21 * (Nsat**s + (Ns**s - Nsat**s) * np.exp(-Ns / Nsat))
        rng = np.random.default_rng(2)
        T2s = truth * (1 + 0.03 * rng.normal(size=Ns.size))
        fit = fit_t2_vs_n(Ns, T2s, mode="saturation")
        assert fit.converged
        for name, val in (("T2_1", T21), ("s", s), ("N_sat", Nsat)):
            assert abs(fit[name] - val) < 2 * fit.standard_errors[name]

    def test_auto_prefers_power_on_power_data(self):
        Ns = 2 ** np.arange(8)
        rng = np.random.default_rng(3)
        T2s = 10e-6 * Ns**0.5 * (1 + 0.02 * rng.normal(size=Ns.size))
        assert fit_t2_vs_n(Ns, T2s, mode="auto").model_id == "t2n_power"

    def test_auto_detects_saturation(self):
        Ns = 2 ** np.arange(9)  # saturation visible by N = 256
        T21, s, Nsat = 10e-6, 0.7, 20.0
        T2s = T21 * (Nsat**s + (Ns**s - Nsat**s) * np.exp(-Ns / Nsat))
        rng = np.random.default_rng(5)
        T2s = T2s * (1 + 0.01 * rng.normal(size=Ns.size))
        assert fit_t2_vs_n(Ns, T2s, mode="auto").model_id == "t2n_saturation"

    def test_noninteger_n_rejected(self):
        with pytest.raises(FitError):
            fit_t2_vs_n([1, 2, 2.5, 4], [1e-6, 2e-6, 2e-6, 3e-6])

    def test_unknown_mode_rejected(self):
        with pytest.raises(FitError):
            fit_t2_vs_n([1, 2, 4, 8], [1e-6, 2e-6, 3e-6, 4e-6], mode="spline")


class TestExpDecay:
    def test_noiseless_half_life(self):
        times = np.linspace(0, 20, 15)  # days
        values = 3.2 * 2.0 ** (-times / 5.7)
        fit = fit_exp_decay(times, values)
        assert fit.converged
        assert fit["half_life"] == pytest.approx(5.7, rel=1e-6)
        assert fit["V0"] == pytest.approx(3.2, rel=1e-6)

    def test_constant_data_flagged(self):
        fit = fit_exp_decay(np.arange(6.0), np.full(6, 2.0))
        assert not fit.converged
        assert fit["half_life"] == np.inf

    def test_scale_equivariance(self):
        times = np.linspace(0, 12, 10)
        values = 1.7 * 2.0 ** (-times / 4.0)
        a = fit_exp_decay(times, values)
        b = fit_exp_decay(times, 2 * values)
        assert b["half_life"] == pytest.approx(a["half_life"], rel=1e-9)
        assert b["V0"] == pytest.approx(2 * a["V0"], rel=1e-9)

    def test_too_few_points(self):
        with pytest.raises(FitError):
            fit_exp_decay([0.0, 1.0], [2.0, 1.0])


class TestLinear:
    def test_exact_negative_slope(self):
        times = np.linspace(0, 30, 8)
        fit = fit_linear(times, 12.0 - 0.74 * times)
        assert fit["slope"] == pytest.approx(-0.74, rel=1e-12)
        assert fit["intercept"] == pytest.approx(12.0, rel=1e-12)

    def test_slope_coverage(self):
        # noise level tuned so the slope stderr lands near 0.54 nm/day
        times = np.linspace(0, 30, 12)
        hits = 0
        stderrs = []
        for seed in range(50):
            rng = np.random.default_rng(seed)
            values = 5.0 + 0.19 * times + 17.6 * rng.normal(size=times.size)
            fit = fit_linear(times, values)
            stderrs.append(fit.standard_errors["slope"])
            if abs(fit["slope"] - 0.19) < 3 * fit.standard_errors["slope"]:
                hits += 1
        assert np.median(stderrs) == pytest.approx(0.54, rel=0.3)
        assert hits >= 45

    def test_two_points_flagged(self):
        fit = fit_linear([0.0, 1.0], [1.0, 3.0])
        assert fit["slope"] == pytest.approx(2.0)
        assert not fit.converged
        assert fit.standard_errors["slope"] == np.inf

    def test_single_point_rejected(self):
        with pytest.raises(FitError):
            fit_linear([1.0], [1.0])


class TestSpectralDecompose:
    def test_kappa_matches_quadrature(self):
        seq = build_sequence("cpmg", 8, 20e-6)
        t = seq.total_time
        wmax = 34 * 150 / (np.pi * t)
        edges = np.append(np.arange(0, wmax, np.pi / t), wmax)
        total = sum(
            integrate.quad(lambda w: filter_weight(seq, w), a, b, limit=50)[0]
            for a, b in zip(edges[:-1], edges[1:])
        )
        tail = 34 / wmax  # mean-square jump heights over omega^2
        assert (total + tail) / (2 * np.pi) == pytest.approx(
            white_noise_kappa(seq), rel=0.01
        )

    def test_white_noise_exact(self):
        S0 = 4e4  # rad^2/s, sized so every coherence lands inside the window
        pairs = [(8, 10e-6), (16, 20e-6), (32, 20e-6), (64, 40e-6)]
        cvals, times, ns = [], [], []
        for n, t in pairs:
            seq = build_sequence("cpmg", n, t)
            cvals.append(np.exp(-S0 * white_noise_kappa(seq)))
            times.append(t)
            ns.append(n)
        ds = dataset_from_coherence(times, ns, cvals)
        samples = spectral_decompose([ds], amplitude=READOUT.max_contrast)
        assert len(samples) == len(pairs)
        for s in samples:
            assert s.S == pytest.approx(S0, rel=1e-3)

    def test_lorentzian_round_trip(self):
        model = Lorentzian((2 * np.pi * 30e3) ** 2, 1e-6)
        pairs = [(n, t) for n in (8, 32, 128) for t in (8e-6, 40e-6, 160e-6)]
        times, ns, cvals = [], [], []
        for n, t in pairs:
            seq = build_sequence("cpmg", n, t)
            c = np.exp(-chi(seq, model))
            if 0.05 < c < 0.95:
                times.append(t)
                ns.append(n)
                cvals.append(c)
        ds = dataset_from_coherence(times, ns, cvals)
        samples = spectral_decompose([ds], amplitude=READOUT.max_contrast)
        rel = [abs(s.S - model.density(s.omega)) / model.density(s.omega) for s in samples]
        assert np.median(rel) < 0.2

    def test_probe_span_covers_half_to_ten_mhz(self):
        freqs = [np.pi * n / t / (2 * np.pi) for n in (8, 512) for t in (160e-6, 8e-6)]
        assert min(freqs) <= 0.05e6 and max(freqs) >= 10e6

    def test_window_skips_extreme_points(self):
        cvals = [0.99, 0.5, 0.01]
        ds = dataset_from_coherence([5e-6, 20e-6, 80e-6], 8, cvals)
        samples = spectral_decompose([ds], amplitude=READOUT.max_contrast)
        assert len(samples) == 1
        assert samples[0].total_time == pytest.approx(20e-6)

    def test_free_evolution_point_warned(self):
        ds = dataset_from_coherence([5e-6, 20e-6], [0, 8], [0.6, 0.5])
        with pytest.warns(UserWarning):
            samples = spectral_decompose([ds], amplitude=READOUT.max_contrast)
        assert len(samples) == 1

    def test_samples_sorted_by_omega(self):
        cvals = [0.5, 0.5, 0.5]
        ds = dataset_from_coherence([40e-6, 10e-6, 20e-6], 8, cvals)
        samples = spectral_decompose([ds], amplitude=READOUT.max_contrast)
        assert all(a.omega <= b.omega for a, b in zip(samples, samples[1:]))


class TestFitProtonPeak:
    def test_recovers_known_area(self):
        b2, center, tau_h = 4e-13, 2 * np.pi * 7.45e6, 1e-6
        peak = ProtonBathPeak(b2, center, tau_h)
        samples = []
        for k in (0.8, 0.9, 1.0, 1.1, 1.25):
            t = 20e-6
            n = max(int(round(k * center * t / np.pi)), 1)
            seq = build_sequence("cpmg", n, t)
            S_est = chi(seq, peak) / white_noise_kappa(seq)
            samples.append(SpectrumSample(np.pi * n / t, S_est, n, t))
        assert fit_proton_peak(samples, center, tau_h) == pytest.approx(b2, rel=1e-3)

    def test_empty_samples_rejected(self):
        with pytest.raises(FitError):
            fit_proton_peak([], 1e7, 1e-6)


class TestT2ChangeStats:
    def test_identical_lists(self):
        out = t2_change_stats([47e-6, 31e-6], [47e-6, 31e-6])
        assert out["mean_percent"] == 0.0
        assert out["std_percent"] == 0.0

    def test_constructed_forty_nine_pm_twenty_two(self):
        before = [100.0, 100.0, 100.0]
        after = [73.0, 51.0, 29.0]
        out = t2_change_stats(before, after)
        assert out["mean_percent"] == pytest.approx(49.0, abs=1e-12)
        assert out["std_percent"] == pytest.approx(22.0, abs=1e-12)

    def test_single_pair_std_undefined(self):
        out = t2_change_stats([47e-6], [31e-6])
        assert np.isnan(out["std_percent"])

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(FitError):
            t2_change_stats([1.0, 2.0], [1.0])
