import numpy as np
import pytest
from scipy import integrate

from nvsense import noisebath
from nvsense.constants import GAMMA_E, GAMMA_H
from nvsense.noisebath import (
    Lorentzian,
    PowerLaw,
    ProtonBathPeak,
    SumSpectrum,
    chi,
    coherence,
    proton_bath_spectrum,
    spectral_density,
    t2_of_model,
)
from nvsense.pulses import build_sequence

from oracles import ou_free_coherence_mc

V = (2 * np.pi * 50e3) ** 2
TAU_C = 2e-6


class TestSpectralDensity:
    def test_lorentzian_at_zero(self):
        lor = Lorentzian(V, TAU_C)
        assert spectral_density(lor, 0.0) == pytest.approx(2 * V * TAU_C, rel=1e-12)

    def test_sum_is_pointwise(self):
        a = Lorentzian(V, TAU_C)
        b = PowerLaw(1e4, 1.0)
        s = SumSpectrum((a, b))
        w = np.geomspace(1e4, 1e8, 20)
        assert np.allclose(s.density(w), a.density(w) + b.density(w), rtol=1e-12)

    def test_lorentzian_normalization(self):
        # (1/pi) int_0^inf S dw = variance
        lor = Lorentzian(V, TAU_C)
        val, _ = integrate.quad(lor.density, 0, np.inf)
        assert val / np.pi == pytest.approx(V, rel=1e-3)

    def test_proton_peak_normalization(self):
        b2 = 1e-12
        peak = ProtonBathPeak(b2, center=2 * np.pi * 7.5e6, tau_h=1e-5)
        hi = peak.center + 3000 / peak.tau_h
        val, _ = integrate.quad(peak.density, 0, hi, points=[peak.center], limit=400)
        # analytic arctan tail of the two Lorentzian branches beyond hi
        th = peak.tau_h
        tail = (np.pi / 2 - np.arctan((hi - peak.center) * th)) + (
            np.pi / 2 - np.arctan((hi + peak.center) * th)
        )
        val += GAMMA_E**2 * b2 * tail
        assert val / np.pi == pytest.approx(GAMMA_E**2 * b2, rel=1e-3)

    def test_negative_omega_rejected(self):
        with pytest.raises(ValueError):
            Lorentzian(V, TAU_C).density(-1.0)

    def test_nonnegative_everywhere(self):
        models = [Lorentzian(V, TAU_C), PowerLaw(1e3, 2.0), ProtonBathPeak(1e-12, 4.7e7, 1e-6)]
        w = np.geomspace(1e2, 1e9, 100)
        for m in models:
            assert np.all(m.density(w) >= 0)


class TestChi:
    def test_zero_spectrum(self):
        seq = build_sequence("free", 0, 1e-6)
        assert chi(seq, Lorentzian(0.0, TAU_C)) == 0.0

    def test_linearity_in_spectrum(self):
        seq = build_sequence("cpmg", 4, 10e-6)
        lor = Lorentzian(V, TAU_C)
        scaled = Lorentzian(3.5 * V, TAU_C)
        assert chi(seq, scaled) == pytest.approx(3.5 * chi(seq, lor), rel=1e-3)

    def test_additivity(self):
        seq = build_sequence("echo", 1, 10e-6)
        a = Lorentzian(V, TAU_C)
        b = Lorentzian(0.3 * V, 0.2e-6)
        both = chi(seq, SumSpectrum((a, b)))
        assert both == pytest.approx(chi(seq, a) + chi(seq, b), rel=1e-3)

    def test_free_evolution_ou_analytic(self):
        # chi(t) = V tau_c^2 (t/tau_c - 1 + exp(-t/tau_c))
        lor = Lorentzian(V, TAU_C)
        for t in (1e-6, 5e-6, 20e-6):
            seq = build_sequence("free", 0, t)
            expect = V * TAU_C**2 * (t / TAU_C - 1 + np.exp(-t / TAU_C))
            assert chi(seq, lor) == pytest.approx(expect, rel=1e-3)

    def test_free_evolution_ou_monte_carlo(self):
        lor = Lorentzian(V, TAU_C)
        times = np.linspace(2e-6, 12e-6, 4)
        mc, err = ou_free_coherence_mc(V, TAU_C, times, n_traj=4000, seed=11)
        for t, m, e in zip(times, mc, err):
            c = coherence(build_sequence("free", 0, t), lor)
            assert abs(c - m) < 3 * e


class TestCoherence:
    def test_unity_for_zero_noise(self):
        seq = build_sequence("cpmg", 2, 5e-6)
        assert coherence(seq, Lorentzian(0.0, TAU_C)) == 1.0

    def test_bounds_on_grid(self):
        models = [Lorentzian(V, TAU_C), PowerLaw(1e3, 0.7), ProtonBathPeak(1e-13, 4.7e7, 1e-6)]
        for model in models:
            for label, n in [("free", 0), ("echo", 1), ("cpmg", 8)]:
                for t in (1e-6, 10e-6, 50e-6):
                    c = coherence(build_sequence(label, n, t), model)
                    assert 0 < c <= 1

    def test_monotone_in_total_time(self):
        lor = Lorentzian(V, TAU_C)
        times = np.geomspace(1e-6, 100e-6, 12)
        cs = [coherence(build_sequence("cpmg", 4, t), lor) for t in times]
        assert np.all(np.diff(cs) <= 1e-12)

    def test_echo_beats_free_for_slow_noise(self):
        # correlated noise (tau_c >> t): decoupling helps
        slow = Lorentzian(V, 100e-6)
        for t in np.linspace(1e-6, 20e-6, 8):
            c_echo = coherence(build_sequence("echo", 1, t), slow)
            c_free = coherence(build_sequence("free", 0, t), slow)
            assert c_echo >= c_free - 1e-9


class TestT2OfModel:
    def test_matches_grid_scan(self):
        lor = Lorentzian(V, TAU_C)
        t2 = t2_of_model("free", 0, lor)
        grid = np.geomspace(0.2 * t2, 5 * t2, 4000)
        chis = np.array(
            [chi(build_sequence("free", 0, t), lor) for t in grid]
        )
        t2_grid = np.interp(1.0, chis, grid)
        assert t2 == pytest.approx(t2_grid, rel=1e-3)

    def test_monotone_in_noise_strength(self):
        t2s = [t2_of_model("echo", 1, Lorentzian(a * V, TAU_C)) for a in (0.5, 1.0, 2.0, 4.0)]
        assert np.all(np.diff(t2s) < 0)

    def test_t2_grows_with_pulse_number(self):
        # broad-band bath: decoupling extends T2 with N
        broad = Lorentzian(V, 0.5e-6)
        t2s = [t2_of_model("cpmg", n, broad) for n in (1, 4, 16, 64)]
        assert np.all(np.diff(t2s) > 0)

    def test_no_bracket_raises(self):
        tiny = Lorentzian(1e-12, TAU_C)
        with pytest.raises(ValueError):
            t2_of_model("free", 0, tiny, t_hi=1e-6)


class TestProtonBathSpectrum:
    def test_center_is_larmor(self):
        model = proton_bath_spectrum(6e28, 5e-9, 0.175, 1e-6)
        assert model.center == pytest.approx(GAMMA_H * 0.175, rel=1e-12)
        assert model.center / (2 * np.pi) == pytest.approx(7.452e6, rel=1e-3)

    def test_depth_cubed_scaling(self):
        a = proton_bath_spectrum(6e28, 4e-9, 0.175, 1e-6)
        b = proton_bath_spectrum(6e28, 8e-9, 0.175, 1e-6)
        assert a.b_rms_sq == pytest.approx(8 * b.b_rms_sq, rel=1e-12)

    def test_linear_in_density(self):
        a = proton_bath_spectrum(6e28, 5e-9, 0.175, 1e-6)
        b = proton_bath_spectrum(1.2e29, 5e-9, 0.175, 1e-6)
        assert b.b_rms_sq == pytest.approx(2 * a.b_rms_sq, rel=1e-12)

    def test_nonpositive_inputs_rejected(self):
        with pytest.raises(ValueError):
            proton_bath_spectrum(-1.0, 5e-9, 0.175, 1e-6)
        with pytest.raises(ValueError):
            proton_bath_spectrum(6e28, 0.0, 0.175, 1e-6)
