"""Adaptive Simpson quadrature, vectorised across many intervals at once.

Every interval is refined independently, but all intervals that are still
active at a given depth are evaluated in one call to the integrand.  The
integrand takes a 1-d array of abscissae and returns an array of shape
``(m, len(t))`` (``m`` integrated components) or ``(len(t),)``.
"""

from __future__ import annotations

import warnings
from typing import Callable

import numpy as np

DEFAULT_TOL = 1e-10
DEFAULT_MAX_DEPTH = 40


def _as_2d(values: np.ndarray, n: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return values.reshape(1, n)
    return values


def adaptive_simpson(
    f: Callable[[np.ndarray], np.ndarray],
    a,
    b,
    *,
    tol: float = DEFAULT_TOL,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> np.ndarray:
    """Integrate ``f`` over each interval ``[a[k], b[k]]``.

    ``tol`` is the absolute error target per interval (per component).
    Returns an array of shape ``(m, n_intervals)``, or ``(n_intervals,)`` if
    ``f`` is scalar valued.  Scalar ``a`` and ``b`` give a scalar-shaped result.
    """
    scalar_input = np.ndim(a) == 0 and np.ndim(b) == 0
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    n = a.size
    if n == 0:
        return np.zeros(0)

    m_ = 0.5 * (a + b)
    probe = f(np.concatenate([a, m_, b]))
    scalar_valued = np.ndim(probe) == 1
    fx = _as_2d(probe, 3 * n)
    fa, fm, fb = fx[:, :n], fx[:, n : 2 * n], fx[:, 2 * n :]
    h = b - a
    whole = h / 6.0 * (fa + 4.0 * fm + fb)
    total = np.zeros_like(whole)

    owner = np.arange(n)
    lo, hi, mid = a, b, m_
    eps = np.full(n, tol)
    depth = 0
    unconverged = 0
    while owner.size:
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        k = owner.size
        fl = _as_2d(f(np.concatenate([lm, rm])), 2 * k)
        flm, frm = fl[:, :k], fl[:, k:]
        hh = hi - lo
        left = hh / 12.0 * (fa + 4.0 * flm + fm)
        right = hh / 12.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        err = np.max(np.abs(delta), axis=0)
        depth += 1
        done = (err <= 15.0 * eps) | ~np.isfinite(err)
        if depth >= max_depth:
            unconverged += int(np.count_nonzero(~done))
            done[:] = True
        if np.any(done):
            np.add.at(total.T, owner[done], (left + right + delta / 15.0)[:, done].T)
        keep = ~done
        if not np.any(keep):
            break
        # split: left halves then right halves
        owner = np.concatenate([owner[keep], owner[keep]])
        new_lo = np.concatenate([lo[keep], mid[keep]])
        new_hi = np.concatenate([mid[keep], hi[keep]])
        new_mid = np.concatenate([lm[keep], rm[keep]])
        fa = np.concatenate([fa[:, keep], fm[:, keep]], axis=1)
        fb = np.concatenate([fm[:, keep], fb[:, keep]], axis=1)
        fm = np.concatenate([flm[:, keep], frm[:, keep]], axis=1)
        whole = np.concatenate([left[:, keep], right[:, keep]], axis=1)
        eps = np.concatenate([eps[keep], eps[keep]]) / 2.0
        lo, hi, mid = new_lo, new_hi, new_mid

    if unconverged:
        warnings.warn(
            f"adaptive Simpson hit max depth {max_depth} on {unconverged} subinterval(s)",
            RuntimeWarning,
            stacklevel=2,
        )
    if scalar_valued:
        total = total[0]
    if scalar_input:
        return total[..., 0]
    return total


def cumulative_from(
    f: Callable[[np.ndarray], np.ndarray],
    ts: np.ndarray,
    t_ref: float,
    *,
    tol: float = DEFAULT_TOL,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> np.ndarray:
    """Return ``F(t_k) = integral of f from t_ref to t_k`` for sorted ``ts``.

    Integrals to points left of ``t_ref`` come out negative (sign-flipped).
    Each grid segment is integrated separately and accumulated outward from
    the segment containing ``t_ref``.
    """
    ts = np.asarray(ts, dtype=float)
    seg = adaptive_simpson(f, ts[:-1], ts[1:], tol=tol, max_depth=max_depth)
    seg2 = np.atleast_2d(seg)
    cum = np.concatenate([np.zeros((seg2.shape[0], 1)), np.cumsum(seg2, axis=1)], axis=1)
    k = int(np.clip(np.searchsorted(ts, t_ref, side="right") - 1, 0, len(ts) - 1))
    if ts[k] == t_ref:
        offset = cum[:, k]
    else:
        part = np.atleast_1d(adaptive_simpson(f, ts[k], t_ref, tol=tol, max_depth=max_depth))
        offset = cum[:, k] + part
    out = cum - offset[:, None]
    return out[0] if np.ndim(seg) == 1 else out
