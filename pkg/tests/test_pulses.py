import numpy as np
import pytest
from scipy import integrate

from nvsense import pulses
from nvsense.pulses import build_sequence, filter_peak_frequency, filter_weight, modulation_transform

from oracles import filter_weight_quadrature


class TestBuildSequence:
    def test_cpmg64_first_pulse(self):
        seq = build_sequence("cpmg", 64, 100e-6)
        assert seq.n_pulses == 64
        assert seq.pulse_times[0] == pytest.approx(0.78125e-6, rel=1e-12)

    def test_spin_echo_midpoint(self):
        seq = build_sequence("echo", 1, 10e-6)
        assert seq.pulse_times == (5e-6,)

    def test_yy8_block_structure(self):
        # one YY-8 unit is 8 pulses; (YY-8)_8 is CPMG(64) with 8 repeated blocks
        t = 80e-6
        unit = build_sequence("cpmg", 8, t / 8)
        train = build_sequence("cpmg", 64, t)
        block0 = np.array(train.pulse_times[:8])
        assert np.allclose(block0, unit.pulse_times)
        shifted = np.array(train.pulse_times[8:16]) - t / 8
        assert np.allclose(shifted, unit.pulse_times)

    def test_zero_pulses_is_free_evolution(self):
        seq = build_sequence("cpmg", 0, 1e-6)
        assert seq.label == pulses.FREE_EVOLUTION
        assert seq.n_pulses == 0

    @pytest.mark.parametrize("total_time", [0.0, -1e-6])
    def test_nonpositive_time_rejected(self, total_time):
        with pytest.raises(ValueError):
            build_sequence("cpmg", 4, total_time)

    def test_negative_pulse_count_rejected(self):
        with pytest.raises(ValueError):
            build_sequence("cpmg", -1, 1e-6)

    def test_echo_with_wrong_count_rejected(self):
        with pytest.raises(ValueError):
            build_sequence("echo", 2, 1e-6)


class TestModulationTransform:
    def test_free_evolution_closed_form(self):
        t = 10e-6
        seq = build_sequence("free", 0, t)
        w = np.array([1e4, 1e5, 2e6, 5e7])
        expect = 4 * np.sin(w * t / 2) ** 2 / w**2
        assert np.allclose(filter_weight(seq, w), expect, rtol=1e-10)

    def test_spin_echo_vanishes_at_zero(self):
        seq = build_sequence("echo", 1, 10e-6)
        assert abs(modulation_transform(seq, 0.0)) < 1e-20

    def test_small_omega_series_continuity(self):
        # values straddling the series switchover agree
        seq = build_sequence("cpmg", 8, 10e-6)
        t = seq.total_time
        w_lo = 0.99e-6 / t
        w_hi = 1.01e-6 / t
        y_lo = modulation_transform(seq, w_lo)
        y_hi = modulation_transform(seq, w_hi)
        assert abs(y_lo - y_hi) < 1e-9 * t

    def test_cpmg64_matches_quadrature_at_peak(self):
        seq = build_sequence("cpmg", 64, 100e-6)
        w = np.pi * 64 / 100e-6
        cf = filter_weight(seq, w)
        qo = filter_weight_quadrature(seq, w)
        assert abs(cf - qo) / qo < 1e-6

    def test_negative_omega_rejected(self):
        seq = build_sequence("echo", 1, 1e-6)
        with pytest.raises(ValueError):
            modulation_transform(seq, -1.0)


class TestFilterWeight:
    def test_free_evolution_zero_at_full_period(self):
        t = 10e-6
        seq = build_sequence("free", 0, t)
        assert filter_weight(seq, 2 * np.pi / t) < 1e-12 * t**2

    def test_spin_echo_at_two_pi_over_t(self):
        t = 10e-6
        seq = build_sequence("echo", 1, t)
        w = 2 * np.pi / t
        assert filter_weight(seq, w) == pytest.approx(16 * np.sin(w * t / 4) ** 4 / w**2, rel=1e-10)
        assert filter_weight(seq, w) == pytest.approx(filter_weight_quadrature(seq, w), rel=1e-6)

    def test_zero_frequency_limits(self):
        t = 10e-6
        assert filter_weight(build_sequence("free", 0, t), 0.0) == pytest.approx(t**2, rel=1e-10)
        assert filter_weight(build_sequence("echo", 1, t), 0.0) < 1e-20

    def test_nonnegative(self):
        seq = build_sequence("cpmg", 16, 20e-6)
        w = np.geomspace(1e3, 1e9, 200)
        assert np.all(filter_weight(seq, w) >= 0)

    @pytest.mark.parametrize("alpha", [0.5, 2.0, 7.3])
    def test_time_scaling(self, alpha):
        # scaling time by alpha maps weight(w/alpha) -> alpha^2 weight(w)
        t = 10e-6
        seq = build_sequence("cpmg", 8, t)
        scaled = build_sequence("cpmg", 8, alpha * t)
        w = np.geomspace(1e4, 1e8, 50)
        assert np.allclose(
            filter_weight(scaled, w / alpha), alpha**2 * filter_weight(seq, w), rtol=1e-9
        )

    @pytest.mark.parametrize("label,n", [("free", 0), ("echo", 1), ("cpmg", 4)])
    def test_parseval(self, label, n):
        # (1/pi) int_0^inf |y~|^2 dw = total_time, within 1%
        t = 10e-6
        seq = build_sequence(label, n, t)
        wmax = (4 * n + 2) * 150 / (np.pi * t)
        edges = np.append(np.arange(0, wmax, np.pi / t), wmax)
        total = sum(
            integrate.quad(lambda w: filter_weight(seq, w), a, b, limit=50)[0]
            for a, b in zip(edges[:-1], edges[1:])
        )
        tail = (4 * n + 2) / (np.pi * wmax)  # mean-square jump heights over omega^2
        assert (total / np.pi + tail) == pytest.approx(t, rel=0.01)

    @pytest.mark.parametrize("n", [4, 8, 64])
    def test_cpmg_harmonic_nulls(self, n):
        t = 10e-6
        seq = build_sequence("cpmg", n, t)
        for k in (1, 2, 3):
            assert filter_weight(seq, 2 * np.pi * k * n / t) < 1e-6 * t**2


class TestFilterPeak:
    def test_cpmg64_half_mhz(self):
        seq = build_sequence("cpmg", 64, 64e-6)
        assert filter_peak_frequency(seq) == pytest.approx(np.pi * 1e6, rel=1e-12)

    def test_cpmg1(self):
        seq = build_sequence("cpmg", 1, 10e-6)
        assert filter_peak_frequency(seq) == pytest.approx(np.pi * 1e5, rel=1e-12)

    def test_free_evolution_rejected(self):
        with pytest.raises(ValueError):
            filter_peak_frequency(build_sequence("free", 0, 1e-6))

    def test_numeric_argmax_within_2_percent(self):
        seq = build_sequence("cpmg", 32, 10e-6)
        peak = filter_peak_frequency(seq)
        w = np.linspace(0.5 * peak, 1.5 * peak, 20001)
        w_best = w[np.argmax(filter_weight(seq, w))]
        assert abs(w_best - peak) / peak < 0.02
