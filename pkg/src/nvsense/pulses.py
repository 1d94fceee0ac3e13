"""Pi-pulse sequences and their exact filter functions.

A sequence of instantaneous pi pulses defines a toggling function y(t) that
alternates between +1 and -1 at each pulse time, starting at +1.  Its windowed
Fourier transform

    y~(omega) = int_0^T y(t) exp(-i omega t) dt

weights how strongly noise at angular frequency omega dephases the spin.  The
transform is evaluated in closed form segment by segment; a series expansion
takes over at very small omega*T where the closed form cancels catastrophically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FREE_EVOLUTION = "free"
SPIN_ECHO = "echo"
CPMG = "cpmg"

_LABELS = (FREE_EVOLUTION, SPIN_ECHO, CPMG)

# below |omega|*T < this, use the per-segment Taylor series
SMALL_OMEGA_T = 1e-6


@dataclass(frozen=True)
class PulseSequence:
    """Timing pattern of ideal pi pulses over a total evolution time.

    pulse_times are strictly increasing and lie inside (0, total_time).
    A (YY-8)_N train is represented as CPMG with 8N pulses; pulse phases do
    not enter the ideal filter.
    """

    total_time: float
    pulse_times: tuple
    label: str

    def __post_init__(self):
        if self.total_time <= 0:
            raise ValueError(f"total_time must be positive, got {self.total_time}")
        if self.label not in _LABELS:
            raise ValueError(f"unknown sequence label {self.label!r}")
        times = np.asarray(self.pulse_times, dtype=float)
        if times.size:
            if np.any(times <= 0) or np.any(times >= self.total_time):
                raise ValueError("pulse times must lie strictly inside (0, total_time)")
            if np.any(np.diff(times) <= 0):
                raise ValueError("pulse times must be strictly increasing")

    @property
    def n_pulses(self) -> int:
        return len(self.pulse_times)


def build_sequence(label: str, n_pulses: int, total_time: float) -> PulseSequence:
    """Construct a free-evolution, spin-echo, or CPMG(n) sequence.

    CPMG pulses sit at t_k = (k - 1/2) * total_time / n.  Spin echo is the
    n = 1 special case; n_pulses = 0 yields free evolution regardless of label.
    """
    if total_time <= 0:
        raise ValueError(f"total_time must be positive, got {total_time}")
    if n_pulses < 0:
        raise ValueError(f"n_pulses must be nonnegative, got {n_pulses}")

    if n_pulses == 0:
        return PulseSequence(total_time, (), FREE_EVOLUTION)
    if label == SPIN_ECHO and n_pulses != 1:
        raise ValueError("spin echo has exactly one pulse")
    if label == FREE_EVOLUTION:
        raise ValueError("free evolution has zero pulses")

    k = np.arange(1, n_pulses + 1)
    times = (k - 0.5) * total_time / n_pulses
    out_label = SPIN_ECHO if label == SPIN_ECHO else CPMG
    return PulseSequence(total_time, tuple(times), out_label)


def _segment_edges_and_signs(seq: PulseSequence):
    edges = np.concatenate(([0.0], np.asarray(seq.pulse_times, float), [seq.total_time]))
    signs = (-1.0) ** np.arange(edges.size - 1)
    return edges, signs


def modulation_transform(seq: PulseSequence, omega):
    """Exact y~(omega) for the sequence's toggling function.

    Accepts scalar or array omega (rad/s, >= 0).  Each constant segment
    [a, b] contributes s * (exp(-i w a) - exp(-i w b)) / (i w); segments with
    |w| * T below SMALL_OMEGA_T use a 4th-order series in w instead.
    """
    omega_arr = np.asarray(omega, dtype=float)
    if np.any(omega_arr < 0):
        raise ValueError("omega must be nonnegative")
    scalar = omega_arr.ndim == 0
    w = np.atleast_1d(omega_arr)

    edges, signs = _segment_edges_and_signs(seq)
    a = edges[:-1]
    b = edges[1:]

    out = np.empty(w.shape, dtype=complex)
    small = np.abs(w) * seq.total_time < SMALL_OMEGA_T

    if np.any(~small):
        wl = w[~small][:, None]
        seg = (np.exp(-1j * wl * a) - np.exp(-1j * wl * b)) / (1j * wl)
        out[~small] = np.sum(signs * seg, axis=1)

    if np.any(small):
        ws = w[small][:, None]
        # int_a^b e^{-iwt} dt = sum_m (-iw)^m (b^{m+1}-a^{m+1}) / (m+1)!
        seg = np.zeros((ws.shape[0], a.size), dtype=complex)
        coeff = np.ones(ws.shape[0], dtype=complex)[:, None]
        for m in range(5):
            seg += coeff * (b ** (m + 1) - a ** (m + 1)) / math.factorial(m + 1)
            coeff = coeff * (-1j * ws)
        out[small] = np.sum(signs * seg, axis=1)

    return out[0] if scalar else out.reshape(omega_arr.shape)


def filter_weight(seq: PulseSequence, omega):
    """|y~(omega)|^2 in seconds^2; the spectral weighting the sequence applies."""
    y = modulation_transform(seq, omega)
    return np.abs(y) ** 2


def filter_peak_frequency(seq: PulseSequence) -> float:
    """Main filter passband center pi * n / T for a pulsed sequence (rad/s)."""
    if seq.n_pulses == 0:
        raise ValueError("free evolution has no filter peak")
    return np.pi * seq.n_pulses / seq.total_time
