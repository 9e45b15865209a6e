"""Two-level dynamics in the diabatic and adiabatic bases.

Conventions: ``H_d = [[Delta, Omega], [Omega, -Delta]]``, eigenvalues
``+-rho``, eigenvectors ``chi_+ = (cos th/2, sin th/2)`` and
``chi_- = (-sin th/2, cos th/2)`` with ``th = atan2(Omega, Delta)`` on a
continuous branch.  Adiabatic amplitudes are ``a = U^T c`` with ``U`` the
rotation by ``th/2``, and obey

    i a' = [[rho, i*gamma], [-i*gamma, -rho]] a,   gamma = th'/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import RegularityError, SpecError
from .geometry import EPS_REG_REL, check_regularity, unwrapped_angle
from .models import DrivingProtocol
from .ode import dopri5
from .quadrature import adaptive_simpson

BASES = ("diabatic", "adiabatic")
FRAMES = ("rotating", "lab")
DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-12
DEFAULT_OUTPUT_POINTS = 201
CLASS_TOL = 1e-3
COINCIDENCE_RATIO = 1e-3
IDENTITY_TOL = 1e-8


@dataclass(frozen=True)
class StateVector:
    basis: str
    plus: complex
    minus: complex

    def __post_init__(self):
        if self.basis not in BASES:
            raise SpecError(f"unknown basis {self.basis!r}; expected one of {BASES}")
        object.__setattr__(self, "plus", complex(self.plus))
        object.__setattr__(self, "minus", complex(self.minus))

    @property
    def norm2(self) -> float:
        return abs(self.plus) ** 2 + abs(self.minus) ** 2

    def normalized(self) -> "StateVector":
        n = math.sqrt(self.norm2)
        if n == 0:
            raise SpecError("zero state vector")
        return StateVector(self.basis, self.plus / n, self.minus / n)


@dataclass
class StateTrajectory:
    """Amplitudes of one run on the output grid.

    ``amplitudes[:, 0]`` is the ``+`` component and ``amplitudes[:, 1]`` the
    ``-`` component in ``basis``.  ``P`` is always the final upper adiabatic
    population, whichever basis was integrated.
    """

    basis: str
    t: np.ndarray
    amplitudes: np.ndarray
    populations: np.ndarray
    P: float
    norm_drift: float
    frame: str = "rotating"
    nsteps: int = 0
    nfev: int = 0
    theta: np.ndarray | None = field(default=None, repr=False)

    def columns(self) -> dict[str, np.ndarray]:
        a = self.amplitudes
        return {
            "t": self.t,
            "re_a_plus": a[:, 0].real, "im_a_plus": a[:, 0].imag,
            "re_a_minus": a[:, 1].real, "im_a_minus": a[:, 1].imag,
            "pop_plus": self.populations[:, 0], "pop_minus": self.populations[:, 1],
        }


@dataclass(frozen=True)
class Eigenstructure:
    e_plus: np.ndarray | float
    e_minus: np.ndarray | float
    chi_plus: np.ndarray
    chi_minus: np.ndarray
    theta: np.ndarray | float


@dataclass
class PassageReport:
    delta_theta: float
    two_int_gamma: float
    passage_class: str
    nearest: str
    nearest_value: float
    distance: float
    endpoint_ratio_initial: float | None
    endpoint_ratio_final: float | None
    bases_coincide_initial: bool
    bases_coincide_final: bool
    theta_initial: float
    theta_final: float
    weights_initial: tuple[float, float]
    weights_final: tuple[float, float]
    tolerance: float

    @property
    def identity_residual(self) -> float:
        return abs(self.delta_theta - self.two_int_gamma)

    def as_dict(self) -> dict:
        return {
            "delta_theta": self.delta_theta,
            "two_int_gamma": self.two_int_gamma,
            "identity_residual": self.identity_residual,
            "class": self.passage_class,
            "nearest": {"class": self.nearest, "value": self.nearest_value, "distance": self.distance},
            "endpoint_ratio": {"initial": self.endpoint_ratio_initial, "final": self.endpoint_ratio_final},
            "bases_coincide": {"initial": self.bases_coincide_initial, "final": self.bases_coincide_final},
            "theta": {"initial": self.theta_initial, "final": self.theta_final},
            "diabatic_weights": {
                "initial": list(self.weights_initial),
                "final": list(self.weights_final),
            },
            "tolerance": self.tolerance,
        }


# --------------------------------------------------------------------------
# static structure


def hamiltonian_diabatic(p: DrivingProtocol, t) -> np.ndarray:
    """``[[Delta, Omega], [Omega, -Delta]]``; shape (2, 2) or (n, 2, 2)."""
    p.check_window(t)
    d, o = p.evaluate(t)
    d, o = np.asarray(d, dtype=float), np.asarray(o, dtype=float)
    return np.stack([np.stack([d, o], -1), np.stack([o, -d], -1)], -2)


def _theta(p: DrivingProtocol, t):
    if np.ndim(t) == 0:
        d, o = p.evaluate(float(t))
        return math.atan2(o, d)
    return unwrapped_angle(p, np.asarray(t, dtype=float))


def _require_regular(p: DrivingProtocol, t) -> None:
    d, o = p.evaluate(t)
    rho = np.hypot(d, o)
    eps = EPS_REG_REL * p.rho_scale
    if np.any(rho < eps):
        bad = np.atleast_1d(np.asarray(t, dtype=float))[np.atleast_1d(rho < eps)][0]
        raise RegularityError("adiabatic basis undefined: energy levels cross", float(bad))


def eigenstructure(p: DrivingProtocol, t) -> Eigenstructure:
    """Quasi-energies ``+-rho`` and real eigenvectors.

    For a grid of times the eigenvectors follow the continuous branch of
    theta, so consecutive vectors always overlap positively.
    """
    p.check_window(t)
    _require_regular(p, t)
    d, o = p.evaluate(t)
    rho = np.hypot(d, o) if np.ndim(t) else math.hypot(d, o)
    th = _theta(p, t)
    c, s = np.cos(np.asarray(th) / 2), np.sin(np.asarray(th) / 2)
    chi_p = np.stack([c, s], -1)
    chi_m = np.stack([-s, c], -1)
    return Eigenstructure(rho, -rho, chi_p, chi_m, th)


def adiabatic_coupling(p: DrivingProtocol, t):
    """``gamma = (Delta*Omega' - Delta'*Omega) / (2*rho^2)``."""
    p.check_window(t)
    _require_regular(p, t)
    d, o, dd, od = p.state(t)
    g = (d * od - dd * o) / (2.0 * (d * d + o * o))
    return float(g) if np.ndim(g) == 0 else g


def coupling_from_angle(p: DrivingProtocol, t, h: float | None = None):
    """``theta'/2`` from a 5-point central difference of the unwrapped angle."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if h is None:
        h = 1e-4 * (p.t_f - p.t_i)
    out = np.empty_like(t)
    for k, tk in enumerate(t):
        th = unwrapped_angle(p, tk + h * np.array([-2.0, -1.0, 0.0, 1.0, 2.0]))
        out[k] = (th[0] - 8 * th[1] + 8 * th[3] - th[4]) / (12 * h) / 2
    return out


def basis_transform(p: DrivingProtocol, t) -> np.ndarray:
    """Rotation by theta/2 whose columns are chi_+ and chi_-."""
    p.check_window(t)
    th = np.asarray(_theta(p, t))
    c, s = np.cos(th / 2), np.sin(th / 2)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def adiabaticity_margin(p: DrivingProtocol, t):
    """``|Delta*Omega' - Delta'*Omega| / rho^3``; equals ``|kappa|``."""
    p.check_window(t)
    _require_regular(p, t)
    d, o, dd, od = p.state(t)
    m = np.abs(d * od - dd * o) / np.hypot(d, o) ** 3
    return float(m) if np.ndim(m) == 0 else m


def max_adiabaticity_margin(p: DrivingProtocol, n: int = 2001) -> tuple[float, float]:
    """``(t, margin)`` at the largest margin over the window."""
    from scipy.optimize import minimize_scalar

    ts = p.grid(n)
    m = adiabaticity_margin(p, ts)
    k = int(np.argmax(m))
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, n - 1)]
    res = minimize_scalar(lambda u: -adiabaticity_margin(p, float(u)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    if -res.fun > m[k]:
        return float(res.x), float(-res.fun)
    return float(ts[k]), float(m[k])


# --------------------------------------------------------------------------
# propagation


def _adiabatic_rhs(p: DrivingProtocol, frame: str):
    state = p.state
    if frame == "rotating":
        # a_+ = b_+ e^{-is}, a_- = b_- e^{+is}, s' = rho
        def rhs(t, y):
            d, o, dd, od = state(t)
            r2 = d * d + o * o
            g = (d * od - dd * o) / (2.0 * r2)
            phi = 2.0 * y[4]
            c, sn = math.cos(phi), math.sin(phi)
            u1, v1, u2, v2 = y[0], y[1], y[2], y[3]
            return [
                g * (c * u2 - sn * v2),
                g * (sn * u2 + c * v2),
                -g * (c * u1 + sn * v1),
                -g * (c * v1 - sn * u1),
                math.sqrt(r2),
            ]
    else:
        def rhs(t, y):
            d, o, dd, od = state(t)
            r2 = d * d + o * o
            g = (d * od - dd * o) / (2.0 * r2)
            r = math.sqrt(r2)
            u1, v1, u2, v2 = y[0], y[1], y[2], y[3]
            return [r * v1 + g * u2, -r * u1 + g * v2, -g * u1 - r * v2, -g * v1 + r * u2, r]
    return rhs


def _diabatic_rhs(p: DrivingProtocol, frame: str):
    state = p.state
    if frame == "rotating":
        # c_+ = d_+ e^{-ix}, c_- = d_- e^{+ix}, x' = Delta
        def rhs(t, y):
            d, o, _, _ = state(t)
            phi = 2.0 * y[4]
            c, sn = math.cos(phi), math.sin(phi)
            u1, v1, u2, v2 = y[0], y[1], y[2], y[3]
            return [
                o * (sn * u2 + c * v2),
                -o * (c * u2 - sn * v2),
                o * (c * v1 - sn * u1),
                -o * (c * u1 + sn * v1),
                d,
            ]
    else:
        def rhs(t, y):
            d, o, _, _ = state(t)
            u1, v1, u2, v2 = y[0], y[1], y[2], y[3]
            return [d * v1 + o * v2, -d * u1 - o * u2, o * v1 - d * v2, -o * u1 + d * u2, d]
    return rhs


def _output_grid(p: DrivingProtocol, t_eval, n_out: int) -> np.ndarray:
    if t_eval is None:
        return p.grid(max(int(n_out), 2))
    ts = np.asarray(t_eval, dtype=float)
    if ts.ndim != 1 or ts.size < 1 or np.any(np.diff(ts) <= 0):
        raise SpecError("t_eval must be a strictly increasing 1-d grid")
    p.check_window(ts)
    if ts[0] > p.t_i:
        ts = np.concatenate([[p.t_i], ts])
    if ts[-1] < p.t_f:
        ts = np.concatenate([ts, [p.t_f]])
    return ts


def propagate(
    p: DrivingProtocol,
    psi0: StateVector | None = None,
    basis: str = "adiabatic",
    window: tuple[float, float] | None = None,
    *,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    t_eval: Sequence[float] | None = None,
    n_out: int = DEFAULT_OUTPUT_POINTS,
    frame: str = "rotating",
    max_step: float | None = None,
) -> StateTrajectory:
    """Integrate the Schrodinger equation over the window.

    Parameters
    ----------
    p : DrivingProtocol
        Driving fields; ``window`` replaces its window if given.
    psi0 : StateVector, optional
        Initial state in either basis.  Defaults to the lower adiabatic
        state, ``a_-(t_i) = 1``.
    basis : {"adiabatic", "diabatic"}
        Basis whose equations are integrated.
    rtol, atol : float
        Local error tolerances of the Dormand-Prince 5(4) integrator.
    t_eval : array_like, optional
        Output times (the window endpoints are always added).  Defaults to
        ``n_out`` uniform points.
    frame : {"rotating", "lab"}
        "rotating" factors out the fast dynamical phase (the accumulated
        phase is carried as a fifth state component); "lab" integrates the
        equations as written.  Both return lab-frame amplitudes.

    Returns
    -------
    StateTrajectory
        ``norm_drift`` is the largest ``| |a|^2 - 1 |`` over all accepted steps.

    Raises
    ------
    RegularityError
        Adiabatic basis requested while the energy levels cross.
    ToleranceNotMet
        Step size underflow.
    """
    if basis not in BASES:
        raise SpecError(f"unknown basis {basis!r}; expected one of {BASES}")
    if frame not in FRAMES:
        raise SpecError(f"unknown frame {frame!r}; expected one of {FRAMES}")
    if not (rtol > 0 and atol > 0):
        raise SpecError("ODE tolerances must be positive")
    if window is not None:
        p = p.with_window(*window)
    ts_out = _output_grid(p, t_eval, n_out)

    # regularity and the continuous angle on the output grid
    probe = p.grid(2001)
    d_, o_ = p.evaluate(probe)
    rho_probe = np.hypot(d_, o_)
    eps = EPS_REG_REL * float(np.max(rho_probe))
    min_rho, t_min = check_regularity(p, probe, rho_probe, eps)
    regular = min_rho >= eps and min_rho > 0
    if not regular:
        if basis == "adiabatic" or (psi0 is None or psi0.basis == "adiabatic"):
            raise RegularityError("adiabatic basis undefined: energy levels cross", t_min)
    theta = unwrapped_angle(p, ts_out) if regular else None

    if psi0 is None:
        psi0 = StateVector("adiabatic", 0.0, 1.0)
    psi0 = psi0.normalized()
    if psi0.basis != basis:
        th0 = float(theta[0])
        c, s = math.cos(th0 / 2), math.sin(th0 / 2)
        if basis == "diabatic":  # c = U a
            amp = (c * psi0.plus - s * psi0.minus, s * psi0.plus + c * psi0.minus)
        else:  # a = U^T c
            amp = (c * psi0.plus + s * psi0.minus, -s * psi0.plus + c * psi0.minus)
    else:
        amp = (psi0.plus, psi0.minus)

    rhs = _adiabatic_rhs(p, frame) if basis == "adiabatic" else _diabatic_rhs(p, frame)
    y0 = [amp[0].real, amp[0].imag, amp[1].real, amp[1].imag, 0.0]
    drift = [0.0]

    def watch(t, y):
        n2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2] + y[3] * y[3]
        drift[0] = max(drift[0], abs(n2 - 1.0))
        return y

    if max_step is None:
        max_step = (p.t_f - p.t_i) / 256
    sol = dopri5(rhs, p.window, y0, rtol=rtol, atol=atol, t_eval=ts_out, max_step=max_step, post_step=watch)
    Y = sol.y
    plus = Y[:, 0] + 1j * Y[:, 1]
    minus = Y[:, 2] + 1j * Y[:, 3]
    if frame == "rotating":
        ph = np.exp(-1j * Y[:, 4])
        plus, minus = plus * ph, minus * np.conj(ph)
    amps = np.stack([plus, minus], -1)
    pops = np.abs(amps) ** 2

    if basis == "adiabatic":
        P = float(pops[-1, 0])
    else:
        th_f = float(theta[-1]) if theta is not None else None
        if th_f is None:
            P = math.nan
        else:
            c, s = math.cos(th_f / 2), math.sin(th_f / 2)
            P = float(abs(c * plus[-1] + s * minus[-1]) ** 2)
    return StateTrajectory(
        basis=basis, t=sol.t, amplitudes=amps, populations=pops, P=min(max(P, 0.0), 1.0) if P == P else P,
        norm_drift=drift[0], frame=frame, nsteps=sol.nsteps, nfev=sol.nfev, theta=theta,
    )


def transition_probability(
    p: DrivingProtocol,
    window: tuple[float, float] | None = None,
    *,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> float:
    """``P = |a_+(t_f)|^2`` starting from ``a_-(t_i) = 1``."""
    return propagate(p, None, "adiabatic", window, rtol=rtol, atol=atol, n_out=2).P


def adiabatic_populations(p: DrivingProtocol, traj: StateTrajectory) -> np.ndarray:
    """Populations of chi_+ and chi_- along a diabatic trajectory (``a = U^T c``)."""
    if traj.basis == "adiabatic":
        return traj.populations
    th = traj.theta if traj.theta is not None else unwrapped_angle(p, traj.t)
    c, s = np.cos(th / 2), np.sin(th / 2)
    cp, cm = traj.amplitudes[:, 0], traj.amplitudes[:, 1]
    ap = c * cp + s * cm
    am = -s * cp + c * cm
    return np.stack([np.abs(ap) ** 2, np.abs(am) ** 2], -1)


# --------------------------------------------------------------------------
# passage classification

_SPECIAL = (
    # (class, offset, spacing): delta_theta in offset + spacing * Z
    ("population_return", 0.0, 2 * math.pi),
    ("label_swap", math.pi, 2 * math.pi),
    ("equal_superposition", math.pi / 2, math.pi),
)


def _nearest_special(dth: float) -> tuple[str, float, float]:
    best = None
    for name, off, step in _SPECIAL:
        value = off + step * round((dth - off) / step)
        dist = abs(dth - value)
        if best is None or dist < best[2]:
            best = (name, value, dist)
    return best


def classify_passage(
    p: DrivingProtocol,
    window: tuple[float, float] | None = None,
    *,
    tol: float = CLASS_TOL,
    ratio_threshold: float = COINCIDENCE_RATIO,
    n: int = 2001,
) -> PassageReport:
    """Classify the endpoint basis configuration by the total turning angle.

    ``delta_theta`` near an even multiple of pi is population return, near
    an odd multiple of pi a label swap, and near an odd multiple of pi/2 an
    equal superposition; anything further than ``tol`` rad from all of these
    is generic.  The angle is cross-checked against ``2 * int gamma dt``.
    """
    if window is not None:
        p = p.with_window(*window)
    ts = p.grid(n)
    d, o, dd, od = p.state(ts)
    rho = np.hypot(d, o)
    eps = EPS_REG_REL * float(np.max(rho))
    min_rho, t_min = check_regularity(p, ts, rho, eps)
    if not (min_rho >= eps and min_rho > 0):
        raise RegularityError("turning angle undefined: energy levels cross", t_min)
    theta = unwrapped_angle(p, ts, (d, o, dd, od))
    dth = float(theta[-1] - theta[0])

    def two_gamma(u):
        a, b, da, db = p.state(u)
        return (a * db - da * b) / (a * a + b * b)

    two_int = float(np.sum(adaptive_simpson(two_gamma, ts[:-1], ts[1:], tol=1e-13)))
    name, value, dist = _nearest_special(dth)
    cls = name if dist <= tol else "generic"

    def ratio(k):
        return None if d[k] == 0 else float(abs(o[k] / d[k]))

    r_i, r_f = ratio(0), ratio(-1)
    th_i, th_f = float(theta[0]), float(theta[-1])
    return PassageReport(
        delta_theta=dth,
        two_int_gamma=two_int,
        passage_class=cls,
        nearest=name,
        nearest_value=value,
        distance=dist,
        endpoint_ratio_initial=r_i,
        endpoint_ratio_final=r_f,
        bases_coincide_initial=r_i is not None and r_i < ratio_threshold,
        bases_coincide_final=r_f is not None and r_f < ratio_threshold,
        theta_initial=th_i,
        theta_final=th_f,
        weights_initial=(math.cos(th_i / 2) ** 2, math.sin(th_i / 2) ** 2),
        weights_final=(math.cos(th_f / 2) ** 2, math.sin(th_f / 2) ** 2),
        tolerance=tol,
    )
