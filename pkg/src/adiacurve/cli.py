"""Command-line front end: ``adiacurve {catalog,geometry,propagate,analyze,reconstruct}``.

Exit codes: 0 ok, 2 spec or parse error, 3 regularity error, 4 tolerance failure.
"""

from __future__ import annotations

import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

import click
import numpy as np

from . import __version__
from .dynamics import (
    BASES,
    DEFAULT_ATOL,
    DEFAULT_RTOL,
    FRAMES,
    classify_passage,
    max_adiabaticity_margin,
    propagate,
)
from .errors import AdiacurveError, RegularityError, SpecError, ToleranceNotMet
from .geometry import (
    CurvatureProfile,
    build_curve,
    find_vertices,
    reconstruct_from_curvature,
    reparametrize_unit_speed,
    rigid_align,
)
from .io import GEOMETRY_COLUMNS, TRAJECTORY_COLUMNS, dumps_json, read_columns, write_csv, write_json, write_long_csv
from .models import DEFAULT_ENDPOINT_RATIO, catalog, protocol_from_spec

TOL_ENV = "ADIACURVE_TOL_ODE"
EXIT_SPEC, EXIT_REGULARITY, EXIT_TOLERANCE = 2, 3, 4


class _Group(click.Group):
    """Maps package errors onto the documented exit codes."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except RegularityError as exc:
            _fail(exc, EXIT_REGULARITY)
        except ToleranceNotMet as exc:
            _fail(exc, EXIT_TOLERANCE)
        except (AdiacurveError, ValueError) as exc:
            _fail(exc, EXIT_SPEC)


def _fail(exc: Exception, code: int):
    click.echo(f"error: {exc}", err=True)
    raise click.exceptions.Exit(code)


# --------------------------------------------------------------------------
# config resolution


def _protocol_options(f):
    opts = [
        click.option("--spec", "spec_path", type=click.Path(dir_okay=False), help="JSON protocol spec file."),
        click.option("--model", help="Catalog model name (see `adiacurve catalog`)."),
        click.option("--p", "params", multiple=True, metavar="NAME=VALUE", help="Parameter override (repeatable)."),
        click.option("--window", nargs=2, type=float, metavar="T_I T_F", help="Time window override."),
        click.option("--delta-expr", help="Detuning expression in t."),
        click.option("--omega-expr", help="Rabi frequency expression in t."),
        click.option("--table", "table_path", type=click.Path(dir_okay=False), help="CSV with columns t, delta, omega."),
        click.option("--endpoint-ratio", type=float, help=f"|Omega/Delta| at the ends of infinite-time models (default {DEFAULT_ENDPOINT_RATIO:g})."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _parse_params(items) -> dict[str, float]:
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep or not name.strip():
            raise SpecError(f"--p expects NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise SpecError(f"--p {name.strip()}: not a number: {value!r}") from None
    return out


def resolve_spec(
    spec_path=None, model=None, params=(), window=None, delta_expr=None, omega_expr=None,
    table_path=None, endpoint_ratio=None,
) -> tuple[dict[str, Any], Path | None]:
    """Merge a spec file with command-line flags; flags win."""
    spec: dict[str, Any] = {}
    base_dir = None
    if spec_path:
        try:
            spec = json.loads(Path(spec_path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise SpecError(f"cannot read spec {spec_path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise SpecError(f"{spec_path}: invalid JSON: {exc}") from None
        if not isinstance(spec, dict):
            raise SpecError(f"{spec_path}: spec must be a JSON object")
        base_dir = Path(spec_path).resolve().parent
    kinds = ("model", "expr", "table", "profile")
    if (delta_expr is None) != (omega_expr is None):
        raise SpecError("--delta-expr and --omega-expr must be given together")
    chosen = [k for k, v in (("model", model), ("expr", delta_expr), ("table", table_path)) if v is not None]
    if len(chosen) > 1:
        raise SpecError("give only one of --model, --delta-expr/--omega-expr, --table")
    if chosen:
        for k in kinds:
            spec.pop(k, None)
        if model is not None:
            spec["model"] = model
        elif delta_expr is not None:
            spec["expr"] = {"delta": delta_expr, "omega": omega_expr}
        else:
            spec["table"] = str(Path(table_path).resolve())
    if not any(k in spec for k in kinds):
        raise SpecError("no protocol given: use --model, --delta-expr/--omega-expr, --table or --spec")
    if params:
        merged = dict(spec.get("params") or {})
        merged.update(_parse_params(params))
        spec["params"] = merged
    if window:
        spec["window"] = [float(window[0]), float(window[1])]
    if endpoint_ratio is not None:
        spec["endpoint_ratio"] = float(endpoint_ratio)
    if "expr" in spec and "window" not in spec:
        raise SpecError("expression protocols need --window")
    return spec, base_dir


def _ode_tolerance(rtol: float | None) -> float:
    if rtol is not None:
        return rtol
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return DEFAULT_RTOL
    try:
        value = float(raw)
    except ValueError:
        raise SpecError(f"{TOL_ENV}={raw!r} is not a number") from None
    if not value > 0:
        raise SpecError(f"{TOL_ENV} must be positive")
    return value


def _parse_sweep(text: str) -> tuple[str, np.ndarray]:
    name, sep, rng = text.partition("=")
    parts = rng.split(":")
    if not sep or len(parts) != 3:
        raise SpecError(f"--sweep expects NAME=START:STOP:COUNT, got {text!r}")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise SpecError(f"--sweep {text!r}: bad numbers") from None
    if n < 1:
        raise SpecError("--sweep count must be >= 1")
    return name.strip(), np.linspace(a, b, n)


def _emit_text(path, text: str) -> None:
    if path is None or path == "-":
        click.echo(text, nl=False)
    else:
        Path(path).write_text(text, encoding="utf-8")


# --------------------------------------------------------------------------
# pipelines (top-level so sweep workers can pickle them)


def _curve_summary(path) -> dict:
    gap = math.hypot(path.x[-1] - path.x[0], path.y[-1] - path.y[0])
    diameter = math.hypot(np.ptp(path.x), np.ptp(path.y))
    return {
        "flags": path.flags.as_dict(),
        "length": path.length,
        "total_turning": float(path.theta[-1] - path.theta[0]),
        "min_rho": float(np.min(path.rho)),
        "closure_gap": gap / diameter if diameter > 0 else None,
    }


def run_propagate(spec: dict, base_dir, opts: dict) -> tuple[dict, Any]:
    p = protocol_from_spec(spec, base_dir)
    traj = propagate(
        p, basis=opts["basis"], rtol=opts["rtol"], atol=opts["atol"], n_out=opts["n"], frame=opts["frame"]
    )
    passage = classify_passage(p)
    t_m, margin = max_adiabaticity_margin(p)
    summary = {
        "P": traj.P,
        "delta_theta": passage.delta_theta,
        "class": passage.passage_class,
        "max_margin": margin,
        "max_margin_t": t_m,
        "norm_drift": traj.norm_drift,
        "basis": traj.basis,
        "steps": traj.nsteps,
        "config": {"protocol": spec, **{k: opts[k] for k in ("basis", "rtol", "atol", "n", "frame")}},
    }
    return summary, traj


def run_analyze(spec: dict, base_dir, opts: dict) -> dict:
    p = protocol_from_spec(spec, base_dir)
    path = build_curve(p, opts["n"])
    vertices = find_vertices(path)
    passage = classify_passage(p)
    t_m, margin = max_adiabaticity_margin(p)
    return {
        "curve": _curve_summary(path),
        "vertices": vertices.as_dict(),
        "passage": passage.as_dict(),
        "max_margin": {"t": t_m, "value": margin},
        "config": {"protocol": spec, "n": opts["n"]},
    }


def _sweep_worker(job):
    kind, spec, base_dir, opts = job
    if kind == "propagate":
        return run_propagate(spec, base_dir, opts)[0]
    return run_analyze(spec, base_dir, opts)


def _run_sweep(kind: str, spec: dict, base_dir, opts: dict, sweep: str, workers: int | None) -> list[dict]:
    name, values = _parse_sweep(sweep)
    jobs = []
    for v in values:
        s = json.loads(json.dumps(spec))
        s["params"] = {**(s.get("params") or {}), name: float(v)}
        jobs.append((kind, s, base_dir, opts))
    workers = workers or min(len(jobs), os.cpu_count() or 1)
    if workers <= 1 or len(jobs) == 1:
        results = [_sweep_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    return [{"param": name, "value": float(v), "result": r} for v, r in zip(values, results)]


# --------------------------------------------------------------------------
# commands


@click.group(cls=_Group, context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="adiacurve")
def main():
    """Two-level quantum systems as plane curves."""


@main.command("catalog")
@click.option("--out", type=click.Path(dir_okay=False), help="Write JSON here instead of stdout.")
def catalog_cmd(out):
    """List the built-in driving protocols and their default parameters."""
    _emit_text(out, dumps_json([m.as_dict() for m in catalog()]))


@main.command("geometry")
@_protocol_options
@click.option("--n", type=click.IntRange(min=2), default=1001, show_default=True, help="Number of samples.")
@click.option("--out", type=click.Path(dir_okay=False), help="Geometry CSV (default stdout).")
@click.option("--summary", type=click.Path(dir_okay=False), help="Summary JSON.")
@click.option("--plot-data", type=click.Path(dir_okay=False), help="Long-format CSV (series,x,y).")
def geometry_cmd(n, out, summary, plot_data, **proto):
    """Sample the plane curve, speed, turning angle and curvature."""
    spec, base_dir = resolve_spec(**proto)
    p = protocol_from_spec(spec, base_dir)
    path = build_curve(p, n)
    write_csv(sys.stdout if out is None else out, GEOMETRY_COLUMNS, path.columns())
    if summary:
        write_json(summary, {**_curve_summary(path), "config": {"protocol": spec, "n": n}})
    if plot_data:
        rows = []
        for name, xs, ys in (
            ("curve", path.x, path.y),
            ("kappa", path.s, path.kappa),
            ("e_plus", path.t, path.e_plus),
            ("e_minus", path.t, path.e_minus),
            ("gamma", path.t, path.gamma),
        ):
            rows.extend((name, float(a), float(b)) for a, b in zip(xs, ys))
        write_long_csv(plot_data, rows)


def _dynamics_options(f):
    opts = [
        click.option("--basis", type=click.Choice(BASES), default="adiabatic", show_default=True),
        click.option("--frame", type=click.Choice(FRAMES), default="rotating", show_default=True,
                     help="Integrate with the dynamical phase factored out, or as written."),
        click.option("--rtol", type=float, help=f"ODE relative tolerance (default ${TOL_ENV} or {DEFAULT_RTOL:g})."),
        click.option("--atol", type=float, default=DEFAULT_ATOL, show_default=True),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


@main.command("propagate")
@_protocol_options
@_dynamics_options
@click.option("--n", type=click.IntRange(min=2), default=201, show_default=True, help="Output time points.")
@click.option("--out", type=click.Path(dir_okay=False), help="Trajectory CSV (sweep: table of results).")
@click.option("--summary", type=click.Path(dir_okay=False), help="Summary JSON (default stdout).")
@click.option("--plot-data", type=click.Path(dir_okay=False), help="Long-format populations CSV.")
@click.option("--sweep", metavar="NAME=START:STOP:COUNT", help="Run over a parameter grid.")
@click.option("--workers", type=click.IntRange(min=1), help="Worker processes for --sweep.")
def propagate_cmd(basis, frame, rtol, atol, n, out, summary, plot_data, sweep, workers, **proto):
    """Solve the Schrodinger equation and report the transition probability."""
    spec, base_dir = resolve_spec(**proto)
    rtol = _ode_tolerance(rtol)
    if not atol > 0:
        raise SpecError("--atol must be positive")
    opts = {"basis": basis, "rtol": rtol, "atol": atol, "n": n, "frame": frame}
    if sweep:
        runs = _run_sweep("propagate", spec, base_dir, opts, sweep, workers)
        if out:
            cols = ("value", "P", "delta_theta", "max_margin", "norm_drift")
            data = {c: [r["value"] if c == "value" else r["result"][c] for r in runs] for c in cols}
            write_csv(out, cols, data)
        _emit_text(summary, dumps_json({"sweep": runs, "config": {"protocol": spec, **opts}}))
        return
    result, traj = run_propagate(spec, base_dir, opts)
    if out:
        write_csv(out, TRAJECTORY_COLUMNS, traj.columns())
    if plot_data:
        rows = [("pop_plus", float(t), float(v)) for t, v in zip(traj.t, traj.populations[:, 0])]
        rows += [("pop_minus", float(t), float(v)) for t, v in zip(traj.t, traj.populations[:, 1])]
        write_long_csv(plot_data, rows)
    _emit_text(summary, dumps_json(result))


@main.command("analyze")
@_protocol_options
@click.option("--n", type=click.IntRange(min=2), default=1001, show_default=True, help="Number of samples.")
@click.option("--out", type=click.Path(dir_okay=False), help="Report JSON (default stdout).")
@click.option("--sweep", metavar="NAME=START:STOP:COUNT", help="Run over a parameter grid.")
@click.option("--workers", type=click.IntRange(min=1), help="Worker processes for --sweep.")
def analyze_cmd(n, out, sweep, workers, **proto):
    """Curve class, vertices, passage class and adiabaticity margin."""
    spec, base_dir = resolve_spec(**proto)
    opts = {"n": n}
    if sweep:
        runs = _run_sweep("analyze", spec, base_dir, opts, sweep, workers)
        _emit_text(out, dumps_json({"sweep": runs, "config": {"protocol": spec, **opts}}))
        return
    _emit_text(out, dumps_json(run_analyze(spec, base_dir, opts)))


@main.command("reconstruct")
@click.option("--profile", "profile_path", type=click.Path(dir_okay=False),
              help="CSV with columns s and kappa (a geometry CSV works).")
@_protocol_options
@click.option("--theta0", type=float, default=0.0, show_default=True, help="Initial turning angle.")
@click.option("--origin", nargs=2, type=float, default=(0.0, 0.0), show_default=True, metavar="X0 Y0")
@click.option("--n", type=click.IntRange(min=2), default=1001, show_default=True, help="Output samples.")
@click.option("--knots", type=click.IntRange(min=2), default=4001, show_default=True,
              help="Profile knots when extracting kappa(s) from a protocol.")
@click.option("--out", type=click.Path(dir_okay=False), help="Curve CSV (default stdout).")
@click.option("--table-out", type=click.Path(dir_okay=False), help="Reconstructed protocol as t,delta,omega CSV.")
@click.option("--spec-out", type=click.Path(dir_okay=False), help="Reconstructed protocol as a JSON spec.")
@click.option("--summary", type=click.Path(dir_okay=False), help="Summary JSON.")
def reconstruct_cmd(profile_path, theta0, origin, n, knots, out, table_out, spec_out, summary, **proto):
    """Rebuild a unit-speed curve and protocol from a curvature profile.

    The profile comes from --profile, or is extracted from a protocol given
    with the usual options; in that case the summary reports the distance
    between the original and the rebuilt curve after rigid alignment.
    """
    original = None
    has_protocol = any(proto.get(k) for k in ("spec_path", "model", "delta_expr", "table_path"))
    if profile_path and has_protocol:
        raise SpecError("give either --profile or a protocol, not both")
    if profile_path:
        cols = read_columns(profile_path, ("s", "kappa"))
        profile = CurvatureProfile(cols["s"], cols["kappa"], theta0=theta0, origin=tuple(origin))
        source = {"profile": str(Path(profile_path).resolve())}
    else:
        spec, base_dir = resolve_spec(**proto)
        p = protocol_from_spec(spec, base_dir)
        original = reparametrize_unit_speed(build_curve(p, knots))
        profile = CurvatureProfile.from_path(original, theta0=theta0, origin=tuple(origin))
        source = {"protocol": spec, "knots": knots}
    grid = np.linspace(0.0, profile.length, n)
    path = reconstruct_from_curvature(profile, grid)
    write_csv(sys.stdout if out is None else out, GEOMETRY_COLUMNS, path.columns())
    if table_out:
        write_csv(table_out, ("t", "delta", "omega"),
                  {"t": path.t, "delta": np.cos(path.theta), "omega": np.sin(path.theta)})
    if spec_out:
        write_json(spec_out, {"profile": {"s": profile.s.tolist(), "kappa": profile.kappa.tolist()},
                              "theta0": profile.theta0, "origin": list(profile.origin)})
    if summary:
        info = {
            "length": profile.length,
            "theta0": profile.theta0,
            "origin": list(profile.origin),
            "total_turning": float(path.theta[-1] - path.theta[0]),
            "flags": path.flags.as_dict(),
            "config": {"source": source, "n": n},
        }
        if original is not None:
            check = reconstruct_from_curvature(profile, np.clip(original.s - original.s[0], 0.0, profile.length))
            xa, ya = rigid_align(check.x, check.y, original.x[0], original.y[0],
                                 float(original.theta[0]), float(check.theta[0]))
            info["aligned_max_distance"] = float(np.max(np.hypot(xa - original.x, ya - original.y)))
        write_json(summary, info)


if __name__ == "__main__":  # pragma: no cover
    main()
