import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from adiacurve.dynamics import propagate
from adiacurve.errors import RegularityError, SpecError
from adiacurve.exprdsl import Binary, Const, Param, Unary, Var, format_expr, parse_expression
from adiacurve.geometry import build_curve, find_vertices, reparametrize_unit_speed
from adiacurve.models import get_model

from .fourier_curves import general_protocol, simple_closed_curves

FAST = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])


# --------------------------------------------------------------------------
# expression language

leaves = st.one_of(
    st.builds(Const, st.floats(0, 1e6, allow_nan=False).map(lambda v: float(f"{v:.6g}"))),
    st.just(Var()),
    st.sampled_from(["a", "b", "omega", "pi"]).map(Param),
)
trees = st.recursive(
    leaves,
    lambda sub: st.one_of(
        st.builds(Unary, st.sampled_from(["neg", "sin", "cos", "tan", "exp", "sqrt", "abs"]), sub),
        st.builds(Binary, st.sampled_from(["+", "-", "*", "/", "^"]), sub, sub),
    ),
    max_leaves=20,
)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_pretty_print_round_trips(tree):
    text = format_expr(tree)
    assert parse_expression(text) == tree


@settings(max_examples=500, deadline=None)
@given(st.binary(max_size=64))
def test_parser_never_crashes_on_bytes(data):
    try:
        parse_expression(data)
    except SpecError:
        pass


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="t0123456789.+-*/^() sincoexpqrtabe", max_size=40))
def test_parser_never_crashes_on_near_miss_text(text):
    try:
        parse_expression(text)
    except SpecError:
        pass


# --------------------------------------------------------------------------
# geometry


@FAST
@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(0.3, 3.0))
def test_curvature_coupling_identity_on_ellipses(d0, o0, w):
    path = build_curve(get_model("ellipse", {"Delta0": d0, "Omega0": o0, "omega": w}), 300)
    kr = path.kappa * path.rho
    assert np.all(np.abs(kr - 2 * path.gamma) <= 1e-9 * (1 + np.abs(kr)))
    rep = find_vertices(path)
    if abs(d0 - o0) > 1e-3:
        assert len(rep.vertices) == 4


@FAST
@given(st.integers(0, 10_000))
def test_closed_curves_turn_by_multiples_of_two_pi(seed):
    p = general_protocol(np.random.default_rng(seed))
    try:
        path = build_curve(p, 801)
    except RegularityError:
        return
    assert path.flags.closed
    turns = (path.theta[-1] - path.theta[0]) / (2 * math.pi)
    assert abs(turns - round(turns)) < 1e-6 / (2 * math.pi)


@FAST
@given(st.integers(0, 10_000))
def test_reparametrisation_invariance(seed):
    p = general_protocol(np.random.default_rng(seed))
    try:
        path = build_curve(p, 801)
    except RegularityError:
        return
    if np.min(path.rho) < 1e-3 * np.max(path.rho):
        return
    u = reparametrize_unit_speed(path)
    assert np.max(np.abs(u.rho - 1)) <= 1e-8
    k_before = np.interp(u.t, path.t, path.kappa)
    # compare at grid points where both are sampled exactly: the endpoints
    assert abs(u.kappa[0] - path.kappa[0]) <= 1e-6 * (1 + abs(path.kappa[0]))
    assert abs(u.kappa[-1] - path.kappa[-1]) <= 1e-6 * (1 + abs(path.kappa[-1]))
    assert np.all(np.isfinite(k_before))


def test_four_vertex_property_on_random_curves():
    for _, path in simple_closed_curves(15, seed=99):
        rep = find_vertices(path)
        assert rep.fvt_applicable and rep.fvt_satisfied, len(rep.vertices)
        kinds = [v.kind for v in rep.vertices]
        assert all(a != b for a, b in zip(kinds, kinds[1:] + kinds[:1]))


# --------------------------------------------------------------------------
# dynamics


@FAST
@given(st.floats(0.5, 3.0), st.floats(0.2, 1.5))
def test_landau_zener_unitarity(d0, o0):
    p = get_model("landau_zener", {"Delta0": d0, "Omega0": o0}, endpoint_ratio=0.05)
    traj = propagate(p, n_out=5)
    assert traj.norm_drift <= 1e-8
    assert np.allclose(traj.populations.sum(axis=1), 1.0, atol=1e-8)
    assert 0.0 <= traj.P <= 1.0
