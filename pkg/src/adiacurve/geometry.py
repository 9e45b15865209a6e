"""Plane-curve geometry of a driving protocol.

A protocol (Delta, Omega) is read as the velocity of the plane curve
``alpha(t) = (int_0^t Delta, int_0^t Omega)``.  Its speed is the eigenenergy
rho, its turning angle is the Hamiltonian polar angle theta, and its
curvature is ``2*gamma/rho`` where gamma is the adiabatic coupling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import RegularityError, SpecError
from .models import DrivingProtocol
from .ode import dopri5
from .quadrature import DEFAULT_TOL, adaptive_simpson, cumulative_from

EPS_REG_REL = 1e-8
CLOSE_TOL = 1e-6
TANGENT_TOL = 1e-6
FLAT_SLOPE = 1e-10
VERTEX_TOL_T = 1e-8
VERTEX_MAX_ITER = 60
INTERSECTION_SPACING = 10.0
MIN_ANGLE_STEP = 1e-12
TWO_PI = 2.0 * math.pi


# --------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class GeometrySample:
    t: float
    s: float
    x: float
    y: float
    rho: float
    theta: float
    kappa: float
    gamma: float
    e_plus: float
    e_minus: float


@dataclass(frozen=True)
class CurveFlags:
    regular: bool
    closed: bool
    simple: bool

    def as_dict(self) -> dict:
        return {"regular": self.regular, "closed": self.closed, "simple": self.simple}


@dataclass
class PlaneCurvePath:
    """Sampled curve, stored column-wise.

    ``parameter`` is ``"t"`` for a path sampled in physical time and ``"s"``
    for a unit-speed resampling (then ``t`` holds the preimage times).
    """

    t: np.ndarray
    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    rho: np.ndarray
    theta: np.ndarray
    kappa: np.ndarray
    gamma: np.ndarray
    eps_reg: float
    protocol: DrivingProtocol | None = field(default=None, repr=False)
    flags: CurveFlags | None = None
    parameter: str = "t"

    @property
    def e_plus(self) -> np.ndarray:
        return self.rho

    @property
    def e_minus(self) -> np.ndarray:
        return -self.rho

    @property
    def length(self) -> float:
        return float(self.s[-1] - self.s[0])

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[GeometrySample]:
        for i in range(len(self.t)):
            yield GeometrySample(
                float(self.t[i]), float(self.s[i]), float(self.x[i]), float(self.y[i]),
                float(self.rho[i]), float(self.theta[i]), float(self.kappa[i]),
                float(self.gamma[i]), float(self.rho[i]), float(-self.rho[i]),
            )

    def columns(self) -> dict[str, np.ndarray]:
        return {
            "t": self.t, "s": self.s, "x": self.x, "y": self.y, "rho": self.rho,
            "theta": self.theta, "kappa": self.kappa, "gamma": self.gamma,
            "e_plus": self.e_plus, "e_minus": self.e_minus,
        }


@dataclass(frozen=True)
class TurningAngle:
    raw: np.ndarray
    normalized: np.ndarray

    @property
    def total(self) -> float:
        return float(self.raw[-1] - self.raw[0])


# --------------------------------------------------------------------------
# pointwise quantities


def _cross(d, o, dd, od):
    return d * od - dd * o


def speed(p: DrivingProtocol, t):
    """Curve speed ``rho = sqrt(Delta^2 + Omega^2)`` (the eigenenergy)."""
    d, o = p.evaluate(t)
    return np.hypot(d, o) if np.ndim(d) else math.hypot(d, o)


def regularity_threshold(p: DrivingProtocol) -> float:
    return EPS_REG_REL * p.rho_scale


def curvature(p: DrivingProtocol, t):
    """Signed curvature ``(Delta*Omega' - Delta'*Omega) / rho^3``."""
    p.check_window(t)
    d, o, dd, od = p.state(t)
    rho = np.hypot(d, o)
    eps = regularity_threshold(p)
    if np.any(rho < eps):
        bad = np.atleast_1d(np.asarray(t, dtype=float))[np.atleast_1d(rho < eps)][0]
        raise RegularityError("curvature undefined: speed below regularity threshold", float(bad))
    k = _cross(d, o, dd, od) / rho**3
    return float(k) if np.ndim(k) == 0 else k


def arc_length(p: DrivingProtocol, t, *, tol: float = DEFAULT_TOL):
    """``s(t) = int_{t_ref}^t rho``; ``t_ref`` is 0 when inside the window.

    Negative for ``t < t_ref``.
    """
    p.check_window(t)
    t_ref = reference_time(p)

    def f(u):
        d, o, _, _ = p.state(u)
        return np.hypot(d, o)

    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = adaptive_simpson(f, np.full(ts.shape, t_ref), ts, tol=tol)
    return float(out[0]) if np.ndim(t) == 0 else out


def reference_time(p: DrivingProtocol) -> float:
    """Lower integration limit for x, y and s: 0 if in the window, else ``t_i``."""
    return 0.0 if p.t_i <= 0.0 <= p.t_f else p.t_i


def _wrap(a):
    return (np.asarray(a) + math.pi) % TWO_PI - math.pi


# --------------------------------------------------------------------------
# regularity and turning angle


def check_regularity(p: DrivingProtocol, ts: np.ndarray, rho: np.ndarray, eps: float) -> tuple[float, float]:
    """Smallest speed on the window, refining grid-local minima.

    Returns ``(min_rho, t_at_min)``.  A zero of rho between two grid points
    is found by bounded minimisation of rho^2 around each suspicious local
    minimum.
    """
    from scipy.optimize import minimize_scalar

    n = len(ts)
    k_min = int(np.argmin(rho))
    best = (float(rho[k_min]), float(ts[k_min]))
    if n < 3:
        return best
    inner = (rho[1:-1] <= rho[:-2]) & (rho[1:-1] <= rho[2:])
    cand = np.nonzero(inner)[0] + 1
    edges = [k for k in (0, n - 1) if rho[k] <= rho[1 if k == 0 else n - 2]]
    cand = np.concatenate([cand, np.array(edges, dtype=int)])
    cand = cand[rho[cand] < 0.5 * np.max(rho)]
    cand = cand[np.argsort(rho[cand])][:64]

    def rho2(u):
        d, o, _, _ = p.state(float(u))
        return d * d + o * o

    for k in cand:
        lo = ts[max(k - 1, 0)]
        hi = ts[min(k + 1, n - 1)]
        res = minimize_scalar(rho2, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
        r = math.sqrt(max(res.fun, 0.0))
        if r < best[0]:
            best = (r, float(res.x))
        if best[0] < eps:
            break
    return best


def _angle_state(p: DrivingProtocol, t: float):
    d, o, dd, od = p.state(float(t))
    rho2 = d * d + o * o
    return math.atan2(o, d), (_cross(d, o, dd, od) / rho2 if rho2 > 0 else math.inf)


def _refined_increment(p, a, b, ra, rb, wa, wb, depth=0) -> float:
    m = 0.5 * (a + b)
    rm, wm = _angle_state(p, m)
    total = 0.0
    for lo, hi, r0, r1, w0, w1 in ((a, m, ra, rm, wa, wm), (m, b, rm, rb, wm, wb)):
        inc = float(_wrap(r1 - r0))
        est = 0.5 * (w0 + w1) * (hi - lo)
        if abs(inc) > math.pi / 2 or not abs(est - inc) <= math.pi / 2:
            if hi - lo < MIN_ANGLE_STEP or depth > 200:
                raise RegularityError("turning angle jumps: curve passes through a cusp", m)
            inc = _refined_increment(p, lo, hi, r0, r1, w0, w1, depth + 1)
        total += inc
    return total


def unwrapped_angle(p: DrivingProtocol, ts: np.ndarray, state=None) -> np.ndarray:
    """Continuous branch of ``atan2(Omega, Delta)`` on the grid ``ts``.

    Grid steps whose wrapped increment exceeds pi/2, or disagrees with the
    trapezoid estimate from theta' = 2*gamma, are bisected until resolved.
    """
    ts = np.asarray(ts, dtype=float)
    d, o, dd, od = state if state is not None else p.state(ts)
    raw = np.arctan2(o, d)
    if ts.size == 1:
        return raw.copy()
    rho2 = d * d + o * o
    with np.errstate(divide="ignore", invalid="ignore"):
        thdot = _cross(d, o, dd, od) / rho2
    inc = _wrap(np.diff(raw))
    est = 0.5 * (thdot[:-1] + thdot[1:]) * np.diff(ts)
    bad = (np.abs(inc) > math.pi / 2) | ~(np.abs(est - inc) <= math.pi / 2)
    for k in np.nonzero(bad)[0]:
        inc[k] = _refined_increment(p, ts[k], ts[k + 1], raw[k], raw[k + 1], thdot[k], thdot[k + 1])
    return raw[0] + np.concatenate([[0.0], np.cumsum(inc)])


def turning_angle(path: PlaneCurvePath) -> TurningAngle:
    """The unwrapped turning angle, raw and shifted so that theta(t_i) = 0."""
    if path.flags is not None and not path.flags.regular:
        raise RegularityError("turning angle needs a regular path")
    return TurningAngle(path.theta.copy(), path.theta - path.theta[0])


# --------------------------------------------------------------------------
# curve construction


def _grid_for(p: DrivingProtocol, grid) -> np.ndarray:
    if isinstance(grid, (int, np.integer)):
        return p.grid(int(grid))
    ts = np.asarray(grid, dtype=float)
    if ts.ndim != 1 or ts.size < 2:
        raise SpecError("grid needs at least 2 points")
    if np.any(np.diff(ts) <= 0):
        raise SpecError("grid must be strictly increasing")
    p.check_window(ts)
    return ts


def build_curve(
    p: DrivingProtocol,
    grid: int | Sequence[float] = 1001,
    *,
    strict: bool = True,
    classify: bool = True,
    tol: float = DEFAULT_TOL,
) -> PlaneCurvePath:
    """Sample the plane curve of ``p`` and its differential geometry.

    x, y and s are integrated with adaptive Simpson from the reference time.
    With ``strict`` a RegularityError is raised when the speed drops below
    ``1e-8 * max rho`` anywhere on the window; otherwise the path is returned
    flagged irregular with non-finite angle and curvature columns.
    """
    ts = _grid_for(p, grid)
    d, o, dd, od = (np.asarray(v, dtype=float) for v in p.state(ts))
    rho = np.hypot(d, o)
    eps = EPS_REG_REL * float(np.max(rho))
    min_rho, t_min = check_regularity(p, ts, rho, eps)
    regular = min_rho >= eps and min_rho > 0
    if not regular and strict:
        raise RegularityError(
            f"speed {min_rho:.3e} below regularity threshold {eps:.3e}: adiabatic levels cross", t_min
        )

    with np.errstate(divide="ignore", invalid="ignore"):
        cross = _cross(d, o, dd, od)
        kappa = cross / rho**3
        gamma = cross / (2.0 * rho**2)
    if regular:
        theta = unwrapped_angle(p, ts, (d, o, dd, od))
    else:
        theta = np.full_like(ts, np.nan)

    def integrand(u):
        dv, ov, _, _ = p.state(u)
        return np.vstack([dv, ov, np.hypot(dv, ov)])

    xys = cumulative_from(integrand, ts, reference_time(p), tol=tol)
    path = PlaneCurvePath(
        t=ts, s=xys[2], x=xys[0], y=xys[1], rho=rho, theta=theta,
        kappa=kappa, gamma=gamma, eps_reg=eps, protocol=p,
    )
    if classify:
        path.flags = classify_curve(path, regular=regular)
    else:
        path.flags = CurveFlags(regular=regular, closed=False, simple=False) if not regular else None
    return path


# --------------------------------------------------------------------------
# classification


def _segment_hits(x, y, s, closed: bool, first_only: bool) -> list[tuple[float, float, float, float]]:
    """Interior self-intersections of the polyline as ``(x, y, s_a, s_b)``."""
    ax, ay, bx, by = x[:-1], y[:-1], x[1:], y[1:]
    m = ax.size
    if m < 3:
        return []
    seg_arc = np.abs(np.diff(s))
    total = abs(s[-1] - s[0])
    scale = max(np.ptp(x), np.ptp(y), 1e-300)
    pad = 1e-12 * scale
    minx, maxx = np.minimum(ax, bx) - pad, np.maximum(ax, bx) + pad
    miny, maxy = np.minimum(ay, by) - pad, np.maximum(ay, by) + pad
    rx, ry = bx - ax, by - ay
    hits = []
    chunk = max(1, 2_000_000 // m)
    for i0 in range(0, m, chunk):
        i1 = min(m, i0 + chunk)
        I = np.arange(i0, i1)[:, None]
        J = np.arange(m)[None, :]
        mask = (J > I + 1) & (minx[I] <= maxx[J]) & (minx[J] <= maxx[I]) & (miny[I] <= maxy[J]) & (miny[J] <= maxy[I])
        ii, jj = np.nonzero(mask)
        if ii.size == 0:
            continue
        ii = ii + i0
        wx, wy = ax[jj] - ax[ii], ay[jj] - ay[ii]
        den = rx[ii] * ry[jj] - ry[ii] * rx[jj]
        wq = wx * ry[jj] - wy * rx[jj]
        wr = wx * ry[ii] - wy * rx[ii]
        lin = np.abs(den) > 1e-14 * np.hypot(rx[ii], ry[ii]) * np.hypot(rx[jj], ry[jj])
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(lin, wq / den, np.nan)
            v = np.where(lin, wr / den, np.nan)
        ok = lin & (u >= 0) & (u <= 1) & (v >= 0) & (v <= 1)
        # collinear overlaps
        par = ~lin & (np.abs(wr) <= 1e-12 * scale * np.hypot(rx[ii], ry[ii]))
        if np.any(par):
            rr = rx[ii] ** 2 + ry[ii] ** 2
            with np.errstate(divide="ignore", invalid="ignore"):
                p0 = (wx * rx[ii] + wy * ry[ii]) / rr
                p1 = ((bx[jj] - ax[ii]) * rx[ii] + (by[jj] - ay[ii]) * ry[ii]) / rr
            lo, hi = np.minimum(p0, p1), np.maximum(p0, p1)
            overlap = par & (hi >= 0) & (lo <= 1)
            u = np.where(overlap, np.clip(lo, 0, 1), u)
            v = np.where(overlap, np.clip(np.where(p0 <= p1, -p0, p0 - 1) / np.maximum(np.abs(p1 - p0), 1e-300), 0, 1), v)
            ok = ok | overlap
        if not np.any(ok):
            continue
        ii, jj, u, v = ii[ok], jj[ok], u[ok], v[ok]
        sa = s[ii] + u * (s[ii + 1] - s[ii])
        sb = s[jj] + v * (s[jj + 1] - s[jj])
        dist = np.abs(sb - sa)
        if closed:
            dist = np.minimum(dist, total - dist)
        near = INTERSECTION_SPACING * np.maximum(seg_arc[ii], seg_arc[jj])
        far = dist > near
        for k in np.nonzero(far)[0]:
            hx = ax[ii[k]] + u[k] * rx[ii[k]]
            hy = ay[ii[k]] + u[k] * ry[ii[k]]
            hits.append((float(hx), float(hy), float(sa[k]), float(sb[k])))
            if first_only:
                return hits
    return hits


def self_intersections(path: PlaneCurvePath) -> list[tuple[float, float, float, float]]:
    closed = bool(path.flags.closed) if path.flags is not None else _is_closed(path)
    return _segment_hits(path.x, path.y, path.s, closed, first_only=False)


def _is_closed(path: PlaneCurvePath) -> bool:
    x, y = path.x, path.y
    diameter = math.hypot(np.ptp(x), np.ptp(y))
    gap = math.hypot(x[-1] - x[0], y[-1] - y[0])
    if not diameter > 0 or gap >= CLOSE_TOL * diameter:
        return False
    th = path.theta
    if not (np.isfinite(th[0]) and np.isfinite(th[-1])):
        d, o = path.protocol.state(float(path.t[0]))[:2], path.protocol.state(float(path.t[-1]))[:2]
        a0, a1 = math.atan2(d[1], d[0]), math.atan2(o[1], o[0])
    else:
        a0, a1 = float(th[0]), float(th[-1])
    return abs(float(_wrap(a1 - a0))) < TANGENT_TOL


def classify_curve(path: PlaneCurvePath, regular: bool | None = None) -> CurveFlags:
    """Flags: regular (speed bounded away from 0), closed, simple.

    closed: endpoint gap below ``1e-6 * diameter`` and end tangents aligned
    to 1e-6 rad.  simple: no crossing between polyline segments that are
    further apart along the curve than 10 local sample spacings.
    """
    if regular is None:
        regular = bool(np.min(path.rho) >= path.eps_reg and np.min(path.rho) > 0)
    closed = _is_closed(path)
    simple = not _segment_hits(path.x, path.y, path.s, closed, first_only=True)
    return CurveFlags(regular=regular, closed=closed, simple=simple)


# --------------------------------------------------------------------------
# unit-speed reparametrisation


def invert_arc_length(path: PlaneCurvePath, s_values, *, tol: float = 1e-14) -> np.ndarray:
    """Times ``t`` with ``s(t) = s_values``.

    Starts from the monotone (PCHIP) interpolant of the sampled ``t(s)`` and
    polishes with Newton steps on the exact quadrature, keeping every
    iterate inside its bracketing grid cell.
    """
    from scipy.interpolate import PchipInterpolator

    p = path.protocol
    if p is None:
        raise SpecError("path has no protocol attached")
    if path.flags is not None and not path.flags.regular:
        raise RegularityError("arc-length inversion needs a regular path")
    s_tab, t_tab = path.s, path.t
    s_values = np.atleast_1d(np.asarray(s_values, dtype=float))
    s_values = np.clip(s_values, s_tab[0], s_tab[-1])
    cell = np.clip(np.searchsorted(s_tab, s_values, side="right") - 1, 0, len(s_tab) - 2)
    base = t_tab[cell]
    lo, hi = base, t_tab[cell + 1]
    t = np.clip(PchipInterpolator(s_tab, t_tab)(s_values), lo, hi)

    def rho(u):
        d, o, _, _ = p.state(u)
        return np.hypot(d, o)

    for _ in range(30):
        s_t = s_tab[cell] + adaptive_simpson(rho, base, t, tol=1e-13)
        resid = s_t - s_values
        step = resid / rho(t)
        t_new = t - step
        t_new = np.where((t_new < lo) | (t_new > hi), 0.5 * (lo + hi), t_new)
        # shrink the bracket for the bisection fallback
        lo = np.where(resid < 0, np.maximum(lo, t), lo)
        hi = np.where(resid > 0, np.minimum(hi, t), hi)
        t_new = np.clip(t_new, lo, hi)
        moved = np.abs(t_new - t)
        t = t_new
        if np.all(moved <= tol * np.maximum(1.0, np.abs(t))):
            break
    return t


def theta_on_branch(path: PlaneCurvePath, t: np.ndarray) -> np.ndarray:
    """Turning angle at arbitrary times, on the branch of ``path.theta``."""
    d, o, _, _ = path.protocol.state(np.asarray(t, dtype=float))
    raw = np.arctan2(o, d)
    guess = np.interp(t, path.t, path.theta)
    return raw + TWO_PI * np.round((guess - raw) / TWO_PI)


def reparametrize_unit_speed(path: PlaneCurvePath, n: int | None = None) -> PlaneCurvePath:
    """Resample ``path`` on a uniform arc-length grid.

    In the new parameter the protocol is ``(Delta, Omega)/rho``, i.e.
    ``(cos theta, sin theta)``, so the speed and the quasi-energies are 1 and
    the coupling per unit s is ``kappa/2``.
    """
    if path.parameter != "t":
        raise SpecError("path is already arc-length parametrised")
    if path.flags is not None and not path.flags.regular:
        raise RegularityError("unit-speed reparametrisation needs a regular path")
    p = path.protocol
    n = len(path) if n is None else int(n)
    s_new = np.linspace(path.s[0], path.s[-1], n)
    t_new = invert_arc_length(path, s_new)
    t_new[0], t_new[-1] = path.t[0], path.t[-1]
    d, o, dd, od = (np.asarray(v, dtype=float) for v in p.state(t_new))
    rho_t = np.hypot(d, o)
    unit = np.hypot(d / rho_t, o / rho_t)
    kappa = _cross(d, o, dd, od) / rho_t**3

    def integrand(u):
        dv, ov, _, _ = p.state(u)
        return np.vstack([dv, ov])

    # positions: from the nearest original sample at or below each new time
    cell = np.clip(np.searchsorted(path.t, t_new, side="right") - 1, 0, len(path.t) - 1)
    dxy = adaptive_simpson(integrand, path.t[cell], t_new)
    x = path.x[cell] + dxy[0]
    y = path.y[cell] + dxy[1]
    theta = theta_on_branch(path, t_new)
    return PlaneCurvePath(
        t=t_new, s=s_new, x=x, y=y, rho=unit, theta=theta, kappa=kappa,
        gamma=0.5 * kappa, eps_reg=path.eps_reg, protocol=p,
        flags=path.flags, parameter="s",
    )


# --------------------------------------------------------------------------
# curvature profiles, Frenet frames and reconstruction


class CurvatureProfile:
    """Curvature as a function of arc length on ``[0, L]``.

    Samples are interpolated with a cubic spline; the turning angle is its
    exact antiderivative plus ``theta0``.  ``origin`` is the start point.
    """

    def __init__(self, s, kappa, theta0: float = 0.0, origin: tuple[float, float] = (0.0, 0.0)):
        from scipy.interpolate import CubicSpline

        s = np.asarray(s, dtype=float)
        kappa = np.asarray(kappa, dtype=float)
        if s.ndim != 1 or s.shape != kappa.shape or s.size < 2:
            raise SpecError("profile needs equal-length 1-d s and kappa columns (>= 2 rows)")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(kappa))):
            raise SpecError("profile contains non-finite values")
        if np.any(np.diff(s) <= 0):
            raise SpecError("profile s must be strictly increasing")
        if len(origin) != 2:
            raise SpecError("origin must be a pair (x0, y0)")
        self.s = s - s[0]
        self.kappa = kappa
        self.theta0 = float(theta0)
        self.origin = (float(origin[0]), float(origin[1]))
        self._spline = CubicSpline(self.s, kappa)
        self._turn = self._spline.antiderivative()

    @classmethod
    def from_function(cls, kappa_fn: Callable, length: float, n: int = 2001, **kw) -> "CurvatureProfile":
        if not length > 0:
            raise SpecError("profile length must be positive")
        s = np.linspace(0.0, length, n)
        return cls(s, np.asarray(kappa_fn(s), dtype=float) * np.ones_like(s), **kw)

    @classmethod
    def from_path(cls, path: PlaneCurvePath, **kw) -> "CurvatureProfile":
        if path.flags is not None and not path.flags.regular:
            raise RegularityError("curvature profile needs a regular path")
        return cls(path.s, path.kappa, **kw)

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def kappa_at(self, s):
        v = self._spline(s)
        return float(v) if np.ndim(v) == 0 else v

    def theta_at(self, s):
        v = self.theta0 + self._turn(s)
        return float(v) if np.ndim(v) == 0 else v


def reconstructed_protocol(profile: CurvatureProfile) -> DrivingProtocol:
    """Unit-speed protocol ``Delta(s) = cos theta(s), Omega(s) = sin theta(s)``."""
    spline, turn, th0 = profile._spline, profile._turn, profile.theta0

    def kernel(s):
        th = th0 + turn(s)
        k = spline(s)
        c, sn = np.cos(th), np.sin(th)
        if isinstance(s, float):
            c, sn, k = float(c), float(sn), float(k)
            return c, sn, -k * sn, k * c
        return c, sn, -k * sn, k * c

    spec = {
        "profile": {"s": profile.s.tolist(), "kappa": profile.kappa.tolist()},
        "theta0": profile.theta0,
        "origin": list(profile.origin),
        "window": [0.0, profile.length],
    }
    return DrivingProtocol("reconstructed", {}, (0.0, profile.length), kernel, "analytic", spec)


def reconstruct_from_curvature(profile: CurvatureProfile, grid: int | Sequence[float] = 1001) -> PlaneCurvePath:
    """Unit-speed curve with the prescribed curvature.

    ``theta(s) = theta0 + int kappa`` and ``alpha(s) = origin + int (cos theta, sin theta)``.
    The returned path's ``protocol`` is the reconstructed unit-speed protocol.
    """
    p = reconstructed_protocol(profile)
    path = build_curve(p, grid)
    path.x = path.x + profile.origin[0]
    path.y = path.y + profile.origin[1]
    path.theta = profile.theta_at(path.t)
    path.parameter = "s"
    return path


@dataclass
class FrenetFrames:
    s: np.ndarray
    position: np.ndarray  # (n, 2)
    tangent: np.ndarray  # (n, 2)
    normal: np.ndarray  # (n, 2)
    max_drift: float


def frenet_propagate(
    profile: CurvatureProfile,
    s_eval: Sequence[float] | None = None,
    *,
    rtol: float = 1e-12,
    atol: float = 1e-14,
) -> FrenetFrames:
    """Integrate ``T' = kappa N, N' = -kappa T, alpha' = T`` along the profile.

    The frame is re-orthonormalised after every step; ``max_drift`` is the
    largest departure from orthonormality seen before a correction.
    """
    if s_eval is None:
        s_eval = profile.s
    s_eval = np.asarray(s_eval, dtype=float)
    th0 = profile.theta0
    y0 = [profile.origin[0], profile.origin[1], math.cos(th0), math.sin(th0), -math.sin(th0), math.cos(th0)]
    spline = profile._spline
    drift = [0.0]

    def rhs(s, y):
        k = float(spline(s))
        return [y[2], y[3], k * y[4], k * y[5], -k * y[2], -k * y[3]]

    def project(s, y):
        tx, ty, nx, ny = y[2], y[3], y[4], y[5]
        drift[0] = max(
            drift[0],
            abs(tx * tx + ty * ty - 1.0),
            abs(nx * nx + ny * ny - 1.0),
            abs(tx * nx + ty * ny),
        )
        r = math.hypot(tx, ty)
        tx, ty = tx / r, ty / r
        dot = nx * tx + ny * ty
        nx, ny = nx - dot * tx, ny - dot * ty
        r = math.hypot(nx, ny)
        return [y[0], y[1], tx, ty, nx / r, ny / r]

    sol = dopri5(rhs, (0.0, profile.length), y0, rtol=rtol, atol=atol, t_eval=s_eval, post_step=project)
    Y = sol.y
    return FrenetFrames(sol.t, Y[:, 0:2], Y[:, 2:4], Y[:, 4:6], drift[0])


def rigid_align(x, y, x_ref0: float, y_ref0: float, angle_ref0: float, angle0: float):
    """Translate the start point onto the reference start and rotate the start
    tangent onto the reference tangent (no reflection)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    phi = angle_ref0 - angle0
    c, s = math.cos(phi), math.sin(phi)
    dx, dy = x - x[0], y - y[0]
    return x_ref0 + c * dx - s * dy, y_ref0 + s * dx + c * dy


# --------------------------------------------------------------------------
# vertices


@dataclass(frozen=True)
class Vertex:
    t: float
    s: float
    kappa: float
    kind: str  # "max" or "min"

    def as_dict(self) -> dict:
        return {"t": self.t, "s": self.s, "kappa": self.kappa, "kind": self.kind}


@dataclass
class VertexReport:
    vertices: list[Vertex]
    flags: CurveFlags
    constant_curvature: bool
    degenerate_spans: list[tuple[float, float]]
    fvt_applicable: bool
    fvt_satisfied: bool | None
    kappa_max: tuple[float, float]  # (t, kappa) on the sample grid
    kappa_min: tuple[float, float]

    def as_dict(self) -> dict:
        return {
            "vertices": [v.as_dict() for v in self.vertices],
            "vertex_count": len(self.vertices),
            "flags": self.flags.as_dict(),
            "constant_curvature": self.constant_curvature,
            "degenerate_spans": [list(span) for span in self.degenerate_spans],
            "fvt_applicable": self.fvt_applicable,
            "fvt_satisfied": self.fvt_satisfied,
            "kappa_max": {"t": self.kappa_max[0], "kappa": self.kappa_max[1]},
            "kappa_min": {"t": self.kappa_min[0], "kappa": self.kappa_min[1]},
        }


def _kappa_of(p: DrivingProtocol) -> Callable:
    def k(t):
        d, o, dd, od = p.state(t)
        return _cross(d, o, dd, od) / np.hypot(d, o) ** 3

    return k


def _kappa_slope(p: DrivingProtocol, h: float) -> Callable:
    """d kappa / ds from analytic kappa(t) and a 5-point central difference."""
    k = _kappa_of(p)

    def slope(t):
        t = np.asarray(t, dtype=float)
        dk = (k(t - 2 * h) - 8 * k(t - h) + 8 * k(t + h) - k(t + 2 * h)) / (12 * h)
        d, o, _, _ = p.state(t)
        return dk / np.hypot(d, o)

    return slope


def find_vertices(path: PlaneCurvePath) -> VertexReport:
    """Locate the local extrema of curvature.

    Sign changes of dkappa/ds on the sample grid are bracketed and refined by
    bisection to |dt| <= 1e-8.  Samples where |dkappa/ds| < 1e-10 count as
    zero slope; runs of two or more such samples are constant-curvature spans,
    reported separately and not counted.  On a closed curve the grid is
    treated as periodic.
    """
    p = path.protocol
    if p is None:
        raise SpecError("path has no protocol attached")
    flags = path.flags or classify_curve(path)
    if not flags.regular:
        raise RegularityError("vertices need a regular path")
    ts = path.t
    period = float(ts[-1] - ts[0])
    slope_t = _kappa_slope(p, 1e-5 * period)
    g = slope_t(ts)
    sign = np.where(np.abs(g) < FLAT_SLOPE, 0, np.sign(g)).astype(int)

    closed = flags.closed
    # closed: drop the duplicate end sample, index k >= n means ts[k - n] + period
    n = len(ts) - 1 if closed else len(ts)

    def unrolled(k: int) -> float:
        return float(ts[k]) if k < n else float(ts[k - n]) + period

    def fold(u: float) -> float:
        return u - period if closed and u >= ts[-1] else u

    def slope(u: float) -> float:
        return float(slope_t(fold(u)))

    def bisect(ta: float, tb: float, sa: int) -> float:
        for _ in range(VERTEX_MAX_ITER):
            if tb - ta <= VERTEX_TOL_T:
                break
            tm = 0.5 * (ta + tb)
            gm = slope(tm)
            if abs(gm) < FLAT_SLOPE * 1e-3:
                return tm
            if (gm > 0) == (sa > 0):
                ta = tm
            else:
                tb = tm
        return 0.5 * (ta + tb)

    nonzero = [i for i in range(n) if sign[i] != 0]
    found: list[tuple[float, str]] = []
    spans: list[tuple[float, float]] = []
    if not nonzero:
        spans.append((float(ts[0]), float(ts[-1])))
    else:
        pairs = list(zip(nonzero[:-1], nonzero[1:]))
        if closed:
            pairs.append((nonzero[-1], nonzero[0] + n))
        else:
            if nonzero[0] >= 2:
                spans.append((float(ts[0]), float(ts[nonzero[0] - 1])))
            if n - 1 - nonzero[-1] >= 2:
                spans.append((float(ts[nonzero[-1] + 1]), float(ts[n - 1])))
        for i, j in pairs:
            si, sj = sign[i], sign[j % n]
            if j - i - 1 >= 2:
                spans.append((fold(unrolled(i + 1)), fold(unrolled(j - 1))))
                continue
            if si == sj:
                continue
            if j - i == 1:
                tv = bisect(unrolled(i), unrolled(j), si)
            else:
                # one flat sample z between the bracket ends
                tz = unrolled(i + 1)
                gz = slope(tz)
                if gz == 0:
                    tv = tz
                elif (gz > 0) == (si > 0):
                    tv = bisect(tz, unrolled(j), si)
                else:
                    tv = bisect(unrolled(i), tz, si)
            tv = fold(tv)
            if closed and tv > ts[-1] - 10 * VERTEX_TOL_T:
                tv = float(ts[0])
            found.append((tv, "max" if si > 0 else "min"))

    vertices: list[Vertex] = []
    if found:
        found.sort()
        tv = np.array([f[0] for f in found])
        kv = np.atleast_1d(_kappa_of(p)(tv))
        sv = np.atleast_1d(arc_length(p, np.clip(tv, p.t_i, p.t_f)))
        vertices = [Vertex(float(t), float(s), float(k), kind) for (t, kind), s, k in zip(found, sv, kv)]

    kappa = path.kappa
    constant = (not nonzero) or bool(np.ptp(kappa) <= 1e-9 * (1.0 + np.max(np.abs(kappa))))
    applicable = bool(flags.simple and flags.closed and flags.regular and not constant)
    satisfied = (len(vertices) >= 4) if applicable else None
    kmax, kmin = int(np.argmax(kappa)), int(np.argmin(kappa))
    return VertexReport(
        vertices=vertices,
        flags=flags,
        constant_curvature=constant,
        degenerate_spans=spans,
        fvt_applicable=applicable,
        fvt_satisfied=satisfied,
        kappa_max=(float(ts[kmax]), float(kappa[kmax])),
        kappa_min=(float(ts[kmin]), float(kappa[kmin])),
    )
