"""Independent oracle values frozen into the test-suite.

Run by hand (``python3 tests/oracles/compute_oracles.py``); nothing here
imports adiacurve.  Prints the values pasted into tests/oracle_values.py.
"""

import math

import mpmath
import numpy as np
from scipy.integrate import solve_ivp


def lz_probability(d0=1.0, o0=1.0, T=200.0):
    # lab-frame diabatic equations as a complex ODE, DOP853 at tight tolerance
    def rhs(t, c):
        d, o = d0 * t, o0
        return -1j * np.array([d * c[0] + o * c[1], o * c[0] - d * c[1]])

    th = math.atan2(o0, -d0 * T)
    c0 = np.array([-math.sin(th / 2), math.cos(th / 2)], dtype=complex)
    sol = solve_ivp(rhs, (-T, T), c0, method="DOP853", rtol=1e-12, atol=1e-14)
    th_f = math.atan2(o0, d0 * T)
    c = sol.y[:, -1]
    return abs(math.cos(th_f / 2) * c[0] + math.sin(th_f / 2) * c[1]) ** 2


def ellipse_perimeter(d0, o0):
    # int_0^{2pi} sqrt(d0^2 cos^2 + o0^2 sin^2) = 4 * max * E(1 - (min/max)^2)
    a, b = max(d0, o0), min(d0, o0)
    return float(4 * a * mpmath.ellipe(1 - (b / a) ** 2))


def limacon_length(a, b):
    return float(mpmath.quad(lambda t: mpmath.sqrt(a * a + b * b + 2 * a * b * mpmath.cos(t)), [0, 2 * mpmath.pi]))


if __name__ == "__main__":
    mpmath.mp.dps = 30
    print("LZ_P_WINDOW_200 =", repr(float(lz_probability())))
    print("ELLIPSE_PERIMETER_05_15 =", repr(ellipse_perimeter(0.5, 1.5)))
    print("ELLIPSE_PERIMETER_05_02 =", repr(ellipse_perimeter(0.5, 0.2)))
    print("LIMACON_LENGTH_15_1 =", repr(limacon_length(1.5, 1.0)))
