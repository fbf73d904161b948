"""Unit conversions for the meV / ps / nm / tesla system used throughout.

CODATA 2018 values.  All Hamiltonians are assembled in meV; dynamics use
hbar in meV*ps so that frequencies come out in 1/ps.
"""

import math

# hbar and Bohr magneton in working units
HBAR_MEV_PS = 0.6582119
MU_B_MEV_PER_T = 0.05788

# speed of light and electron rest mass, used for the sub-band kinetic term
C_NM_PER_PS = 2.99792458e5
M0C2_MEV = 5.1099895000e8
ELECTRON_MASS_MEV_PS2_PER_NM2 = M0C2_MEV / C_NM_PER_PS**2

# in-plane magnetic length at 1 T, from l_b = sqrt(2*hbar/(Q*B))
_HBAR_SI = 1.054571817e-34
_Q_SI = 1.602176634e-19
MAGNETIC_LENGTH_1T_NM = math.sqrt(2.0 * _HBAR_SI / _Q_SI) * 1e9


def magnetic_length_nm(B: float) -> float:
    """In-plane magnetic length l_b = sqrt(2*hbar/(Q*B)) in nm, B in tesla."""
    if B <= 0.0:
        raise ValueError(f"magnetic field must be positive, got {B}")
    return MAGNETIC_LENGTH_1T_NM / math.sqrt(B)
