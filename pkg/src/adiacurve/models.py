"""Driving protocols: detuning Delta(t) and Rabi frequency Omega(t) with derivatives.

Catalog models carry hand-derived derivatives.  Protocols built from the
expression language get exact derivatives by dual numbers, and tabulated
protocols take them from a monotone cubic (PCHIP) interpolant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

from . import exprdsl
from .errors import NotFound, OutOfWindow, SpecError

# ratio |Omega/Delta| targeted at the ends of the truncated infinite windows
DEFAULT_ENDPOINT_RATIO = 1e-2

Kernel = Callable[[object], tuple]


def _sin(x):
    return math.sin(x) if isinstance(x, float) else np.sin(x)


def _cos(x):
    return math.cos(x) if isinstance(x, float) else np.cos(x)


def _const(value: float, t):
    return value if isinstance(t, float) else np.full(np.shape(t), value)


@dataclass(frozen=True)
class DrivingProtocol:
    """An evaluable driving protocol on a closed time window.

    ``kernel(t)`` returns ``(delta, omega, delta_dot, omega_dot)`` and accepts a
    float or an ndarray.  Protocol objects are immutable.
    """

    name: str
    params: Mapping[str, float]
    window: tuple[float, float]
    kernel: Kernel = field(repr=False, compare=False)
    derivative_method: str = "analytic"
    spec: Mapping | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        t_i, t_f = (float(v) for v in self.window)
        if not (math.isfinite(t_i) and math.isfinite(t_f) and t_i < t_f):
            raise SpecError(f"invalid window [{t_i!r}, {t_f!r}]")
        object.__setattr__(self, "window", (t_i, t_f))
        object.__setattr__(self, "params", dict(self.params))

    @property
    def t_i(self) -> float:
        return self.window[0]

    @property
    def t_f(self) -> float:
        return self.window[1]

    def state(self, t):
        """Unchecked ``(delta, omega, delta_dot, omega_dot)`` at ``t``."""
        if isinstance(t, (int, np.floating)):
            t = float(t)
        elif not isinstance(t, float):
            t = np.asarray(t, dtype=float)
        return self.kernel(t)

    def check_window(self, t) -> None:
        t_i, t_f = self.window
        slack = 1e-12 * max(1.0, abs(t_i), abs(t_f))
        arr = np.asarray(t, dtype=float)
        bad = (arr < t_i - slack) | (arr > t_f + slack) | ~np.isfinite(arr)
        if np.any(bad):
            first = float(arr[bad].flat[0]) if arr.ndim else float(arr)
            raise OutOfWindow(first, self.window)

    def evaluate(self, t):
        self.check_window(t)
        d, o, _, _ = self.state(t)
        return d, o

    def derivatives(self, t):
        self.check_window(t)
        _, _, dd, od = self.state(t)
        return dd, od

    def delta(self, t):
        return self.evaluate(t)[0]

    def omega(self, t):
        return self.evaluate(t)[1]

    def delta_dot(self, t):
        return self.derivatives(t)[0]

    def omega_dot(self, t):
        return self.derivatives(t)[1]

    def grid(self, n: int) -> np.ndarray:
        if n < 2:
            raise SpecError("grid needs at least 2 points")
        return np.linspace(self.t_i, self.t_f, int(n))

    @cached_property
    def rho_scale(self) -> float:
        """Max of rho over a 2001-point sample of the window."""
        d, o, _, _ = self.state(self.grid(2001))
        return float(np.max(np.hypot(d, o)))

    def with_window(self, t_i: float, t_f: float) -> "DrivingProtocol":
        spec = dict(self.spec) if self.spec else None
        if spec is not None:
            spec["window"] = [float(t_i), float(t_f)]
        return DrivingProtocol(
            self.name, self.params, (t_i, t_f), self.kernel, self.derivative_method, spec
        )


def eval_protocol(p: DrivingProtocol, t):
    """``(Delta, Omega)`` at ``t``; raises OutOfWindow outside ``p.window``."""
    return p.evaluate(t)


def protocol_derivatives(p: DrivingProtocol, t):
    """``(dDelta/dt, dOmega/dt)`` at ``t``; raises OutOfWindow outside ``p.window``."""
    return p.derivatives(t)


# --------------------------------------------------------------------------
# catalog


@dataclass(frozen=True)
class ModelInfo:
    name: str
    defaults: Mapping[str, float]
    delta: str
    omega: str
    window: str
    description: str
    build: Callable = field(repr=False, compare=False)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "params": dict(self.defaults),
            "delta": self.delta,
            "omega": self.omega,
            "window": self.window,
            "description": self.description,
        }


def _landau_zener(p, ratio):
    d0, o0 = p["Delta0"], p["Omega0"]

    def kernel(t):
        return d0 * t, _const(o0, t), _const(d0, t), _const(0.0, t)

    if d0 == 0:
        raise SpecError("landau_zener needs Delta0 != 0")
    half = abs(o0) / (abs(d0) * ratio) if o0 != 0 else 1.0
    return kernel, (-half, half)


def _parabolic(p, ratio):
    d0, o0 = p["Delta0"], p["Omega0"]

    def kernel(t):
        return d0 * (t * t - 1.0), _const(o0, t), 2.0 * d0 * t, _const(0.0, t)

    if d0 == 0:
        raise SpecError("parabolic needs Delta0 != 0")
    half = math.sqrt(1.0 + abs(o0) / (abs(d0) * ratio)) if o0 != 0 else 2.0
    return kernel, (-half, half)


def _ellipse_kernel(d0, o0, w):
    def kernel(t):
        c, s = _cos(w * t), _sin(w * t)
        return d0 * c, o0 * s, -d0 * w * s, o0 * w * c

    return kernel


def _ellipse(p, ratio):
    w = p["omega"]
    _positive(w, "omega")
    return _ellipse_kernel(p["Delta0"], p["Omega0"], w), (0.0, 2 * math.pi / w)


def _circle(p, ratio):
    w = p["omega"]
    _positive(w, "omega")
    return _ellipse_kernel(p["Delta0"], p["Delta0"], w), (0.0, 2 * math.pi / w)


def _limacon_kernel(a, b, w):
    def kernel(t):
        s1, c1 = _sin(w * t), _cos(w * t)
        s2, c2 = _sin(2 * w * t), _cos(2 * w * t)
        return (
            -b * s1 - a * s2,
            b * c1 + a * c2,
            -w * (b * c1 + 2 * a * c2),
            -w * (b * s1 + 2 * a * s2),
        )

    return kernel


def _limacon(p, ratio):
    w = p["omega"]
    _positive(w, "omega")
    return _limacon_kernel(p["a"], p["b"], w), (0.0, 2 * math.pi / w)


def _cardioid(p, ratio):
    w = p["omega"]
    _positive(w, "omega")
    return _limacon_kernel(p["a"], p["a"], w), (0.0, 2 * math.pi / w)


def _lissajous(p, ratio):
    a, b, n, ph = p["a"], p["b"], p["n"], p["delta"]

    def kernel(t):
        arg = n * t + ph
        return a * _cos(arg), b * _cos(t), -a * n * _sin(arg), -b * _sin(t)

    return kernel, (0.0, 2 * math.pi)


def _positive(value: float, name: str) -> None:
    if not value > 0:
        raise SpecError(f"{name} must be positive, got {value!r}")


_CATALOG: dict[str, ModelInfo] = {
    m.name: m
    for m in [
        ModelInfo(
            "landau_zener",
            {"Delta0": 1.0, "Omega0": 1.0},
            "Delta0*t",
            "Omega0",
            "[-T, T] with |Omega/Delta| = endpoint_ratio at t = +-T",
            "linear sweep through a single avoided crossing at t = 0",
            _landau_zener,
        ),
        ModelInfo(
            "parabolic",
            {"Delta0": 1.0, "Omega0": 1.0},
            "Delta0*(t^2 - 1)",
            "Omega0",
            "[-T, T] with |Omega/Delta| = endpoint_ratio at t = +-T",
            "double crossing at t = +-1",
            _parabolic,
        ),
        ModelInfo(
            "ellipse",
            {"Delta0": 0.5, "Omega0": 1.5, "omega": 1.0},
            "Delta0*cos(omega*t)",
            "Omega0*sin(omega*t)",
            "[0, 2*pi/omega]",
            "closed convex curve with four vertices",
            _ellipse,
        ),
        ModelInfo(
            "circle",
            {"Delta0": 0.5, "omega": 1.0},
            "Delta0*cos(omega*t)",
            "Delta0*sin(omega*t)",
            "[0, 2*pi/omega]",
            "ellipse with Omega0 = Delta0: constant curvature",
            _circle,
        ),
        ModelInfo(
            "limacon",
            {"a": 1.5, "b": 1.0, "omega": 1.0},
            "-b*sin(omega*t) - a*sin(2*omega*t)",
            "b*cos(omega*t) + a*cos(2*omega*t)",
            "[0, 2*pi/omega]",
            "regular closed curve with an inner loop (not simple) for a > b > 0",
            _limacon,
        ),
        ModelInfo(
            "cardioid",
            {"a": 1.0, "omega": 1.0},
            "-a*sin(omega*t) - a*sin(2*omega*t)",
            "a*cos(omega*t) + a*cos(2*omega*t)",
            "[0, 2*pi/omega]",
            "limacon with a = b: cusp (level crossing) at t = pi",
            _cardioid,
        ),
        ModelInfo(
            "lissajous",
            {"a": 1.5, "b": 1.5, "delta": math.pi / 2, "n": 0.9},
            "a*cos(n*t + delta)",
            "b*cos(t)",
            "[0, 2*pi]",
            "Lissajous figure; closed only for rational n",
            _lissajous,
        ),
    ]
}


def catalog() -> list[ModelInfo]:
    return list(_CATALOG.values())


def model_info(name: str) -> ModelInfo:
    try:
        return _CATALOG[name]
    except KeyError:
        raise NotFound(f"unknown model {name!r}; known: {', '.join(_CATALOG)}") from None


def get_model(
    name: str,
    params: Mapping[str, float] | None = None,
    window: tuple[float, float] | None = None,
    *,
    endpoint_ratio: float = DEFAULT_ENDPOINT_RATIO,
) -> DrivingProtocol:
    """Instantiate catalog model ``name`` with parameter overrides."""
    info = model_info(name)
    merged = dict(info.defaults)
    for key, value in (params or {}).items():
        if key not in merged:
            raise SpecError(f"model {name!r} has no parameter {key!r} (has {sorted(merged)})")
        merged[key] = float(value)
    if not endpoint_ratio > 0:
        raise SpecError("endpoint_ratio must be positive")
    kernel, default_window = info.build(merged, endpoint_ratio)
    win = tuple(window) if window is not None else default_window
    spec = {"model": name, "params": merged, "window": [float(win[0]), float(win[1])]}
    return DrivingProtocol(name, merged, win, kernel, "analytic", spec)


# --------------------------------------------------------------------------
# user protocols


def expression_protocol(
    delta_expr: str,
    omega_expr: str,
    window: tuple[float, float],
    params: Mapping[str, float] | None = None,
    name: str = "expression",
) -> DrivingProtocol:
    params = {k: float(v) for k, v in (params or {}).items()}
    declared = set(params)
    trees = [exprdsl.parse_expression(text, declared) for text in (delta_expr, omega_expr)]
    f_delta, f_omega = (exprdsl.compile_dual(tree, params) for tree in trees)

    def kernel(t):
        d, dd = f_delta(t)
        o, od = f_omega(t)
        if isinstance(t, float):
            return float(d), float(o), float(dd), float(od)
        shape = np.shape(t)
        return tuple(np.broadcast_to(v, shape) for v in (d, o, dd, od))

    spec = {
        "expr": {"delta": exprdsl.format_expr(trees[0]), "omega": exprdsl.format_expr(trees[1])},
        "params": params,
        "window": [float(window[0]), float(window[1])],
    }
    return DrivingProtocol(name, params, tuple(window), kernel, "dual", spec)


def tabulated_protocol(t, delta, omega, name: str = "tabulated") -> DrivingProtocol:
    """Protocol from samples, interpolated with monotone cubics (PCHIP)."""
    from scipy.interpolate import PchipInterpolator

    t = np.asarray(t, dtype=float)
    delta = np.asarray(delta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if t.ndim != 1 or t.size < 2 or delta.shape != t.shape or omega.shape != t.shape:
        raise SpecError("table needs equal-length 1-d columns t, delta, omega with >= 2 rows")
    if not np.all(np.isfinite(t)) or not np.all(np.isfinite(delta)) or not np.all(np.isfinite(omega)):
        raise SpecError("table contains non-finite values")
    if np.any(np.diff(t) <= 0):
        raise SpecError("table times must be strictly increasing")
    f_d, f_o = PchipInterpolator(t, delta), PchipInterpolator(t, omega)
    g_d, g_o = f_d.derivative(), f_o.derivative()

    def kernel(x):
        if isinstance(x, float):
            return float(f_d(x)), float(f_o(x)), float(g_d(x)), float(g_o(x))
        return f_d(x), f_o(x), g_d(x), g_o(x)

    spec = {
        "table": {"t": t.tolist(), "delta": delta.tolist(), "omega": omega.tolist()},
        "window": [float(t[0]), float(t[-1])],
    }
    return DrivingProtocol(name, {}, (t[0], t[-1]), kernel, "interpolant", spec)


def _window_of(spec: Mapping) -> tuple[float, float] | None:
    win = spec.get("window")
    if win is None:
        return None
    if not isinstance(win, (list, tuple)) or len(win) != 2:
        raise SpecError("window must be a two-element list [t_i, t_f]")
    try:
        return float(win[0]), float(win[1])
    except (TypeError, ValueError):
        raise SpecError(f"window values must be numbers, got {win!r}") from None


def _numeric_params(raw) -> dict[str, float]:
    if raw is None:
        return {}
    if not isinstance(raw, Mapping):
        raise SpecError("params must be an object of name -> number")
    out = {}
    for key, value in raw.items():
        try:
            out[str(key)] = float(value)
        except (TypeError, ValueError):
            raise SpecError(f"parameter {key!r} is not a number: {value!r}") from None
    return out


def protocol_from_spec(spec: Mapping, base_dir=None) -> DrivingProtocol:
    """Build a protocol from a JSON-shaped spec.

    Accepted shapes::

        {"model": name, "params": {...}, "window": [t_i, t_f], "endpoint_ratio": r}
        {"expr": {"delta": "...", "omega": "..."}, "params": {...}, "window": [...]}
        {"table": {"t": [...], "delta": [...], "omega": [...]}}   or {"table": "file.csv"}
        {"profile": {"s": [...], "kappa": [...]}, "theta0": th, "origin": [x, y]}
    """
    if not isinstance(spec, Mapping):
        raise SpecError("protocol spec must be a JSON object")
    kinds = [k for k in ("model", "expr", "table", "profile") if k in spec]
    if len(kinds) != 1:
        raise SpecError("protocol spec needs exactly one of 'model', 'expr', 'table', 'profile'")
    kind = kinds[0]
    window = _window_of(spec)
    params = _numeric_params(spec.get("params"))

    if kind == "model":
        ratio = float(spec.get("endpoint_ratio", DEFAULT_ENDPOINT_RATIO))
        return get_model(str(spec["model"]), params, window, endpoint_ratio=ratio)

    if kind == "expr":
        expr = spec["expr"]
        if not isinstance(expr, Mapping) or not {"delta", "omega"} <= set(expr):
            raise SpecError("'expr' needs string fields 'delta' and 'omega'")
        if window is None:
            raise SpecError("expression protocols need an explicit window")
        return expression_protocol(str(expr["delta"]), str(expr["omega"]), window, params)

    if kind == "table":
        from .io import read_columns

        table = spec["table"]
        if isinstance(table, str):
            table = read_columns(_resolve(table, base_dir), ("t", "delta", "omega"))
        if not isinstance(table, Mapping) or not {"t", "delta", "omega"} <= set(table):
            raise SpecError("'table' needs columns t, delta, omega")
        p = tabulated_protocol(table["t"], table["delta"], table["omega"])
        return p.with_window(*window) if window is not None else p

    from .geometry import CurvatureProfile, reconstructed_protocol
    from .io import read_columns

    prof = spec["profile"]
    if isinstance(prof, str):
        prof = read_columns(_resolve(prof, base_dir), ("s", "kappa"))
    if not isinstance(prof, Mapping) or not {"s", "kappa"} <= set(prof):
        raise SpecError("'profile' needs columns s, kappa")
    origin = spec.get("origin", [0.0, 0.0])
    profile = CurvatureProfile(
        prof["s"], prof["kappa"], theta0=float(spec.get("theta0", 0.0)), origin=tuple(origin)
    )
    p = reconstructed_protocol(profile)
    return p.with_window(*window) if window is not None else p


def _resolve(path: str, base_dir):
    from pathlib import Path

    candidate = Path(path)
    if base_dir is not None and not candidate.is_absolute():
        candidate = Path(base_dir) / candidate
    return candidate
