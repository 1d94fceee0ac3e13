"""Photon-level synthetic datasets and contrast normalization.

Each sweep point is read out in two branches (projections on m_s = 0 and
m_s = 1 selected by the phase of the final pi/2 pulse).  With per-shot photon
means f0 > f1 and spin-up probability p = (1 + C)/2, branch photon totals are
independent Poisson draws with means reps * (f1 + (f0 - f1) p) and
reps * (f1 + (f0 - f1) (1 - p)).  The normalized contrast
2 (F0 - F1) / (F0 + F1) rejects common-mode intensity noise.

Determinism: every sweep point gets its own counter-based RNG stream keyed by
(seed, point index), so datasets are byte-reproducible under any evaluation
order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import noisebath
from .pulses import PulseSequence


@dataclass(frozen=True)
class ReadoutModel:
    """Mean detected photons per readout window in each spin projection."""

    f0: float
    f1: float
    t_read: float = 2.0e-6

    def __post_init__(self):
        if not self.f0 > self.f1 > 0:
            raise ValueError("need f0 > f1 > 0")
        if self.t_read <= 0:
            raise ValueError("t_read must be positive")

    @property
    def max_contrast(self) -> float:
        return 2 * (self.f0 - self.f1) / (self.f0 + self.f1)


@dataclass
class ExperimentDataset:
    """Sweep values with raw branch photon totals.

    sweep holds evolution times in seconds (or pulse counts for N sweeps);
    n_pulses is recorded per point so spectral decomposition can rebuild the
    exact sequence.
    """

    sweep: np.ndarray
    n_pulses: np.ndarray
    F0_counts: np.ndarray
    F1_counts: np.ndarray
    reps: int
    seed: int
    family: str = "cpmg"
    field_gauss: float = 1750.0

    def __post_init__(self):
        self.sweep = np.asarray(self.sweep, dtype=float)
        self.n_pulses = np.asarray(self.n_pulses, dtype=int)
        self.F0_counts = np.asarray(self.F0_counts, dtype=np.int64)
        self.F1_counts = np.asarray(self.F1_counts, dtype=np.int64)
        lengths = {len(self.sweep), len(self.n_pulses), len(self.F0_counts), len(self.F1_counts)}
        if len(lengths) != 1:
            raise ValueError("dataset columns must have equal length")
        if np.any(self.F0_counts < 0) or np.any(self.F1_counts < 0):
            raise ValueError("photon counts must be nonnegative")


def _point_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def simulate_from_coherence(
    times, n_pulses, coherence_values, readout: ReadoutModel, reps: int, seed: int,
    family: str = "cpmg",
) -> ExperimentDataset:
    """Draw branch photon totals for given per-point coherence values."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    times = np.asarray(times, dtype=float)
    cvals = np.asarray(coherence_values, dtype=float)
    n_pulses = np.broadcast_to(np.asarray(n_pulses, dtype=int), times.shape)
    f0, f1 = readout.f0, readout.f1

    F0 = np.empty(times.size, dtype=np.int64)
    F1 = np.empty(times.size, dtype=np.int64)
    for i, c in enumerate(cvals):
        p = 0.5 * (1.0 + c)
        rng = _point_rng(seed, i)
        F0[i] = rng.poisson(reps * (f1 + (f0 - f1) * p))
        F1[i] = rng.poisson(reps * (f1 + (f0 - f1) * (1.0 - p)))
    return ExperimentDataset(times, n_pulses, F0, F1, reps, seed, family=family)


def simulate_dd_dataset(
    seqs: list[PulseSequence], model, readout: ReadoutModel, reps: int, seed: int
) -> ExperimentDataset:
    """Synthesize a dynamical-decoupling sweep from a noise spectrum."""
    times = np.array([s.total_time for s in seqs])
    n_pulses = np.array([s.n_pulses for s in seqs])
    cvals = np.array([noisebath.coherence(s, model) for s in seqs])
    family = seqs[0].label if seqs else "cpmg"
    return simulate_from_coherence(times, n_pulses, cvals, readout, reps, seed, family=family)


def simulate_t1_dataset(
    T1: float, times, readout: ReadoutModel, reps: int, seed: int
) -> ExperimentDataset:
    """Longitudinal relaxation sweep: contrast envelope exp(-t/T1)."""
    if T1 <= 0:
        raise ValueError("T1 must be positive")
    times = np.asarray(times, dtype=float)
    cvals = np.exp(-times / T1)
    return simulate_from_coherence(times, 0, cvals, readout, reps, seed, family="t1")


def simulate_stretched_dataset(
    T2: float, n: float, times, readout: ReadoutModel, reps: int, seed: int,
    n_pulses: int = 64,
) -> ExperimentDataset:
    """Sweep whose coherence follows exp[-(t/T2)^n] directly (fit fixtures)."""
    if T2 <= 0:
        raise ValueError("T2 must be positive")
    times = np.asarray(times, dtype=float)
    cvals = np.exp(-((times / T2) ** n))
    return simulate_from_coherence(times, n_pulses, cvals, readout, reps, seed)


def normalize_contrast(F0, F1):
    """Spin contrast 2 (F0 - F1) / (F0 + F1); errors on all-zero points."""
    F0 = np.asarray(F0, dtype=float)
    F1 = np.asarray(F1, dtype=float)
    total = F0 + F1
    if np.any(total <= 0):
        raise ValueError("contrast undefined where F0 + F1 = 0")
    return 2 * (F0 - F1) / total


def contrast_variance(F0, F1):
    """Poisson-propagated variance of the normalized contrast.

    d(contrast)/dF0 = 4 F1 / (F0+F1)^2, symmetric in F1; branch counts are
    independent Poisson so var = (4/(F0+F1)^4) (F1^2 F0 + F0^2 F1).
    """
    F0 = np.asarray(F0, dtype=float)
    F1 = np.asarray(F1, dtype=float)
    total = F0 + F1
    if np.any(total <= 0):
        raise ValueError("contrast undefined where F0 + F1 = 0")
    return 16.0 * F0 * F1 / total**3
