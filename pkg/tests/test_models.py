import json
import math

import numpy as np
import pytest

from adiacurve.errors import NotFound, OutOfWindow, SpecError
from adiacurve.models import (
    DEFAULT_ENDPOINT_RATIO,
    catalog,
    eval_protocol,
    expression_protocol,
    get_model,
    model_info,
    protocol_derivatives,
    protocol_from_spec,
    tabulated_protocol,
)

NAMES = [m.name for m in catalog()]


def test_catalog_contents():
    assert NAMES == ["landau_zener", "parabolic", "ellipse", "circle", "limacon", "cardioid", "lissajous"]
    assert model_info("limacon").defaults == {"a": 1.5, "b": 1.0, "omega": 1.0}
    with pytest.raises(NotFound):
        model_info("nope")


@pytest.mark.parametrize("name", NAMES)
def test_catalog_kernel_matches_its_own_formula(name):
    # the documented formula, compiled by the expression language, is an
    # independent implementation of the hand-written kernel and derivatives
    info = model_info(name)
    p = get_model(name)
    q = expression_protocol(info.delta, info.omega, p.window, dict(info.defaults))
    ts = p.grid(97)
    for a, b in zip(p.state(ts), q.state(ts)):
        assert np.allclose(a, b, rtol=1e-13, atol=1e-13)


def test_landau_zener_window_from_endpoint_ratio():
    p = get_model("landau_zener", {"Delta0": 2.0, "Omega0": 0.5})
    T = 0.5 / (2.0 * DEFAULT_ENDPOINT_RATIO)
    assert p.window == (-T, T)
    d, o = eval_protocol(p, T)
    assert abs(o / d) == pytest.approx(DEFAULT_ENDPOINT_RATIO)
    q = get_model("landau_zener", endpoint_ratio=1e-3)
    assert q.window == (-1000.0, 1000.0)


def test_parabolic_endpoint_ratio():
    p = get_model("parabolic")
    d, o = eval_protocol(p, p.t_f)
    assert abs(o / d) == pytest.approx(DEFAULT_ENDPOINT_RATIO)


def test_window_override_and_bounds():
    p = get_model("landau_zener", window=(-3, 3))
    assert p.window == (-3.0, 3.0)
    with pytest.raises(OutOfWindow):
        eval_protocol(p, 3.5)
    with pytest.raises(OutOfWindow):
        protocol_derivatives(p, np.array([0.0, -4.0]))
    with pytest.raises(SpecError):
        get_model("ellipse", window=(1.0, 1.0))


def test_parameter_validation():
    with pytest.raises(SpecError):
        get_model("ellipse", {"radius": 1.0})
    with pytest.raises(SpecError):
        get_model("circle", {"omega": 0.0})
    with pytest.raises(SpecError):
        get_model("landau_zener", {"Delta0": 0.0})


def test_scalar_and_array_evaluation_agree():
    p = get_model("lissajous")
    ts = p.grid(11)
    d, o = eval_protocol(p, ts)
    for k, t in enumerate(ts):
        ds, os_ = eval_protocol(p, float(t))
        assert isinstance(ds, float)
        assert (d[k], o[k]) == (ds, os_)


def test_expression_protocol_derivatives():
    p = expression_protocol("a*t^3", "exp(-t)", (0.0, 2.0), {"a": 2.0})
    dd, od = protocol_derivatives(p, 1.0)
    assert dd == pytest.approx(6.0)
    assert od == pytest.approx(-math.exp(-1.0))
    with pytest.raises(SpecError):
        expression_protocol("b*t", "1", (0.0, 1.0), {"a": 1.0})


def test_tabulated_protocol_interpolates_and_differentiates():
    t = np.linspace(0, 2, 401)
    p = tabulated_protocol(t, np.sin(t), np.cos(t))
    assert eval_protocol(p, 1.0)[0] == pytest.approx(math.sin(1.0), abs=1e-8)
    assert protocol_derivatives(p, 1.0)[0] == pytest.approx(math.cos(1.0), abs=1e-4)
    with pytest.raises(SpecError):
        tabulated_protocol([0, 1, 1], [0, 0, 0], [1, 1, 1])


def test_protocol_from_spec_kinds(tmp_path):
    p = protocol_from_spec({"model": "ellipse", "params": {"Delta0": 0.5, "Omega0": 0.2}})
    assert p.params["Omega0"] == 0.2
    q = protocol_from_spec({"expr": {"delta": "cos(t)", "omega": "sin(t)"}, "window": [0, 1]})
    assert eval_protocol(q, 0.0) == (1.0, 0.0)
    csv = tmp_path / "tab.csv"
    csv.write_text("t,delta,omega\n0,1,0\n1,1,1\n2,1,2\n")
    r = protocol_from_spec({"table": "tab.csv"}, base_dir=tmp_path)
    assert r.window == (0.0, 2.0)
    s = protocol_from_spec({"profile": {"s": [0, 1, 2], "kappa": [0, 0, 0]}, "theta0": math.pi / 2})
    d, o = eval_protocol(s, 1.0)
    assert (d, o) == pytest.approx((0.0, 1.0), abs=1e-15)
    # specs round-trip through JSON
    again = protocol_from_spec(json.loads(json.dumps(p.spec)))
    assert again.params == p.params and again.window == p.window


@pytest.mark.parametrize(
    "bad",
    [
        {},
        {"model": "ellipse", "expr": {"delta": "1", "omega": "1"}},
        {"expr": {"delta": "1"}, "window": [0, 1]},
        {"expr": {"delta": "1", "omega": "1"}},
        {"model": "ellipse", "window": [0]},
        {"model": "ellipse", "params": {"Delta0": "big"}},
        {"profile": {"s": [0, 0], "kappa": [1, 1]}},
        [1, 2],
    ],
)
def test_protocol_from_spec_rejects(bad):
    with pytest.raises(SpecError):
        protocol_from_spec(bad)
