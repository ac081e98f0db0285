"""Unit conventions.

Frequencies given in MHz are cyclic (nu = omega / 2 pi); every computation runs
in angular units (rad/s) and seconds.
"""

import math

TWO_PI = 2.0 * math.pi
MHZ = TWO_PI * 1e6  # rad/s per cyclic MHz
KHZ = TWO_PI * 1e3
US = 1e-6

DEFAULT_AMPLITUDE_BOUND = 1.0 * MHZ


def mhz_to_rad_s(value):
    return value * MHZ


def rad_s_to_mhz(value):
    return value / MHZ
