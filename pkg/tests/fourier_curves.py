"""Random smooth closed protocols built from low-order Fourier series."""

import math

import numpy as np

from adiacurve.errors import RegularityError
from adiacurve.geometry import build_curve
from adiacurve.models import DrivingProtocol

TWO_PI = 2 * math.pi


def star_protocol(rng: np.random.Generator, order: int = 4, amp: float = 0.35) -> DrivingProtocol:
    """Velocity of the polar curve ``r(t) (cos t, sin t)`` with a trigonometric ``r > 0``."""
    ks = np.arange(2, order + 1)
    c = rng.uniform(-1, 1, ks.size) * amp / ks
    ph = rng.uniform(0, TWO_PI, ks.size)
    scale = rng.uniform(0.5, 2.0)

    def kernel(t):
        arg = np.multiply.outer(np.asarray(t, dtype=float), ks) + ph
        r = scale * (1 + np.sum(c * np.cos(arg), -1))
        r1 = -scale * np.sum(c * ks * np.sin(arg), -1)
        r2 = -scale * np.sum(c * ks * ks * np.cos(arg), -1)
        ct, st = np.cos(t), np.sin(t)
        d = r1 * ct - r * st
        o = r1 * st + r * ct
        dd = r2 * ct - 2 * r1 * st - r * ct
        od = r2 * st + 2 * r1 * ct - r * st
        if isinstance(t, float):
            return float(d), float(o), float(dd), float(od)
        return d, o, dd, od

    return DrivingProtocol("star", {}, (0.0, TWO_PI), kernel)


def general_protocol(rng: np.random.Generator, order: int = 3) -> DrivingProtocol:
    """Delta, Omega as trigonometric polynomials without constant term."""
    ks = np.arange(1, order + 1)
    A = rng.normal(size=(4, ks.size)) / ks**1.5

    def kernel(t):
        arg = np.multiply.outer(np.asarray(t, dtype=float), ks)
        c, s = np.cos(arg), np.sin(arg)
        d = np.sum(A[0] * c + A[1] * s, -1)
        o = np.sum(A[2] * c + A[3] * s, -1)
        dd = np.sum(ks * (-A[0] * s + A[1] * c), -1)
        od = np.sum(ks * (-A[2] * s + A[3] * c), -1)
        if isinstance(t, float):
            return float(d), float(o), float(dd), float(od)
        return d, o, dd, od

    return DrivingProtocol("fourier", {}, (0.0, TWO_PI), kernel)


def simple_closed_curves(count: int, seed: int = 2024, n: int = 1001):
    """First ``count`` random protocols the classifier accepts as simple,
    closed, regular and of non-constant curvature, with their paths."""
    rng = np.random.default_rng(seed)
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > 50 * count:
            raise RuntimeError("could not generate enough simple closed curves")
        p = star_protocol(rng) if tries % 2 else general_protocol(rng)
        try:
            path = build_curve(p, n)
        except RegularityError:
            continue
        f = path.flags
        if f.regular and f.closed and f.simple and np.ptp(path.kappa) > 1e-6:
            out.append((p, path))
    return out
