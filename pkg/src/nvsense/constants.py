"""Physical constants used across the toolkit (SI units, angular frequencies)."""

import numpy as np

# gyromagnetic ratios, rad s^-1 T^-1
GAMMA_E = 1.760859e11      # NV electron spin
GAMMA_H = 2.675222e8       # proton
GAMMA_C13 = 6.728284e7     # carbon-13

HBAR = 1.054571817e-34     # J s
MU0 = 4 * np.pi * 1e-7     # T m / A

# reference angular frequency pinning the power-law spectrum amplitude scale
OMEGA_REF = 2 * np.pi * 1e6

GAUSS_TO_TESLA = 1e-4
