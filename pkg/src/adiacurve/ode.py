"""Adaptive Dormand-Prince 5(4) integrator for small real ODE systems.

The state is a plain list of floats.  For the 4-6 dimensional systems used by
the propagation and Frenet code, scalar Python arithmetic is several times
faster than numpy arrays, which pay a per-call overhead on every stage.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ToleranceNotMet

Rhs = Callable[[float, list], list]

# Butcher tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# fifth-order minus embedded fourth-order weights
E1, E3, E4, E5, E6, E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)

# quartic continuous extension (Shampine 1986)
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


@dataclass
class DenseOutput:
    """Piecewise quartic interpolant over all accepted steps."""

    t_nodes: list = field(default_factory=list)
    steps: list = field(default_factory=list)  # (t, h, y, K) per accepted step

    def __call__(self, t: float) -> np.ndarray:
        if not self.steps:
            raise ValueError("empty dense output")
        i = bisect.bisect_right(self.t_nodes, t) - 1
        i = min(max(i, 0), len(self.steps) - 1)
        t0, h, y0, K = self.steps[i]
        x = (t - t0) / h
        Q = np.asarray(K).T @ _P
        return np.asarray(y0) + h * (Q @ np.array([x, x * x, x**3, x**4]))


@dataclass
class OdeSolution:
    t: np.ndarray
    y: np.ndarray
    nfev: int
    nsteps: int
    nrejected: int
    dense: DenseOutput | None = None


def _rms_error(y, y_new, err, rtol, atol) -> float:
    total = 0.0
    for a, b, e in zip(y, y_new, err):
        sc = atol + rtol * max(abs(a), abs(b))
        total += (e / sc) ** 2
    return math.sqrt(total / len(y))


def _initial_step(fun, t0, y0, f0, direction_span, rtol, atol) -> float:
    # Hairer, Norsett & Wanner, Solving ODEs I, sec. II.4
    scale = [atol + abs(v) * rtol for v in y0]
    n = len(y0)
    d0 = math.sqrt(sum((v / s) ** 2 for v, s in zip(y0, scale)) / n)
    d1 = math.sqrt(sum((v / s) ** 2 for v, s in zip(f0, scale)) / n)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    y1 = [a + h0 * b for a, b in zip(y0, f0)]
    f1 = fun(t0 + h0, y1)
    d2 = math.sqrt(sum(((b - a) / s) ** 2 for a, b, s in zip(f0, f1, scale)) / n) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, direction_span)


def dopri5(
    fun: Rhs,
    t_span: tuple[float, float],
    y0: Sequence[float],
    *,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    t_eval: Sequence[float] | None = None,
    h0: float | None = None,
    max_step: float = math.inf,
    max_steps: int = 20_000_000,
    dense_output: bool = False,
    post_step: Callable[[float, list], list] | None = None,
) -> OdeSolution:
    """Integrate ``y' = fun(t, y)`` forward from ``t_span[0]`` to ``t_span[1]``.

    Steps are shortened to land exactly on every ``t_eval`` point, so outputs
    carry full fifth-order accuracy rather than interpolation error.  When
    ``t_eval`` is None only the endpoints are returned.

    ``post_step`` may replace the state after each accepted step (used for
    projecting back onto a constraint manifold).  Raises ToleranceNotMet when
    the step size underflows or ``max_steps`` is exhausted.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("t_span must be increasing")
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    y = [float(v) for v in y0]
    if t_eval is None:
        targets = [t1]
    else:
        targets = sorted(float(t) for t in t_eval)
        if targets and (targets[0] < t0 or targets[-1] > t1):
            raise ValueError("t_eval outside t_span")
    out_t: list[float] = []
    out_y: list[list] = []
    ti = 0
    while ti < len(targets) and targets[ti] <= t0:
        out_t.append(t0)
        out_y.append(list(y))
        ti += 1
    if t_eval is None:
        out_t.append(t0)
        out_y.append(list(y))
    if targets and targets[-1] < t1:
        targets.append(t1)
        keep_last = False
    else:
        keep_last = True

    dense = DenseOutput() if dense_output else None
    n = len(y)
    nfev = 1
    k1 = fun(t0, y)
    if h0 is None:
        h = _initial_step(fun, t0, y, k1, t1 - t0, rtol, atol)
        nfev += 1
    else:
        h = h0
    h = min(h, max_step)
    t = t0
    nsteps = nrejected = 0
    rng = range(n)

    while ti < len(targets):
        if nsteps >= max_steps:
            raise ToleranceNotMet(f"max_steps={max_steps} exhausted at t={t!r}")
        target = targets[ti]
        h_min = 16 * math.ulp(max(abs(t), abs(target), 1e-300))
        if h < h_min:
            raise ToleranceNotMet(f"step size underflow at t={t!r} (h={h:.3e})")
        clipped = t + h >= target
        hs = target - t if clipped else h

        y2 = [y[i] + hs * A21 * k1[i] for i in rng]
        k2 = fun(t + C2 * hs, y2)
        y3 = [y[i] + hs * (A31 * k1[i] + A32 * k2[i]) for i in rng]
        k3 = fun(t + C3 * hs, y3)
        y4 = [y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]) for i in rng]
        k4 = fun(t + C4 * hs, y4)
        y5 = [y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]) for i in rng]
        k5 = fun(t + C5 * hs, y5)
        y6 = [
            y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
            for i in rng
        ]
        k6 = fun(t + hs, y6)
        y_new = [
            y[i] + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
            for i in rng
        ]
        t_new = target if clipped else t + hs
        k7 = fun(t_new, y_new)
        nfev += 6
        err = [
            hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            for i in rng
        ]
        err_norm = _rms_error(y, y_new, err, rtol, atol)
        if not math.isfinite(err_norm):
            h = hs * MIN_FACTOR
            nrejected += 1
            continue
        if err_norm > 1.0:
            h = hs * max(MIN_FACTOR, SAFETY * err_norm ** -0.2)
            nrejected += 1
            continue

        if dense is not None:
            dense.t_nodes.append(t)
            dense.steps.append((t, hs, list(y), [k1, k2, k3, k4, k5, k6, k7]))
        nsteps += 1
        factor = MAX_FACTOR if err_norm == 0 else min(MAX_FACTOR, SAFETY * err_norm ** -0.2)
        # a clipped step says nothing about the natural step; keep the old proposal
        h_next = hs * factor
        h = min(max(h, h_next) if clipped else h_next, max_step)
        t, y, k1 = t_new, y_new, k7
        if post_step is not None:
            y = post_step(t, y)
            k1 = fun(t, y)
            nfev += 1
        if clipped:
            if ti < len(targets) - 1 or keep_last:
                out_t.append(t)
                out_y.append(list(y))
            ti += 1

    return OdeSolution(
        t=np.array(out_t),
        y=np.array(out_y).reshape(len(out_t), n),
        nfev=nfev,
        nsteps=nsteps,
        nrejected=nrejected,
        dense=dense,
    )
