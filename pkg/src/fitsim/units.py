"""Unit conventions.

All rates and energies are measured in units of the target-channel decay rate
Gamma (``GAMMA_SI`` in s^-1), lengths in micrometres and times in 1/Gamma.
"""

import math

#: Decay rate of the target intermediate state, 2*pi x 6.06 MHz, in s^-1.
GAMMA_SI = 2.0 * math.pi * 6.06e6

#: Speed of light in micrometres per (1/Gamma).
SPEED_OF_LIGHT = 2.99792458e14 / GAMMA_SI

HBAR = 1.054571817e-34
EPSILON_0 = 8.8541878128e-12


def mhz_to_gamma(f_mhz):
    """Convert a cyclic frequency in MHz to Gamma units."""
    return 2.0 * math.pi * f_mhz * 1e6 / GAMMA_SI


def c6_from_ghz(c6_ghz_um6):
    """Convert a dispersion coefficient quoted in GHz um^6 to Gamma um^6.

    The GHz value is read as an angular rate (1e9 s^-1), which is the reading
    under which the commonly quoted coefficients reproduce their stated pair
    shifts.
    """
    return c6_ghz_um6 * 1e9 / GAMMA_SI
