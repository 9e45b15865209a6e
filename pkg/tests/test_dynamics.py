import math

import numpy as np
import pytest

from adiacurve.dynamics import (
    StateVector,
    adiabatic_coupling,
    adiabatic_populations,
    adiabaticity_margin,
    basis_transform,
    classify_passage,
    coupling_from_angle,
    eigenstructure,
    hamiltonian_diabatic,
    max_adiabaticity_margin,
    propagate,
    transition_probability,
)
from adiacurve.errors import RegularityError, SpecError
from adiacurve.geometry import curvature
from adiacurve.models import expression_protocol, get_model

from .oracle_values import LZ_P_ASYMPTOTIC, LZ_P_WINDOW_200, circle_rabi_probability

REGULAR_MODELS = ["landau_zener", "parabolic", "ellipse", "circle", "limacon", "lissajous"]


def const(d, o, window=(0.0, 1.0)):
    return expression_protocol(repr(d), repr(o), window)


# --------------------------------------------------------------------------
# static structure


def test_hamiltonian_three_four_five():
    H = hamiltonian_diabatic(const(0.3, 0.4), 0.5)
    assert np.allclose(H, [[0.3, 0.4], [0.4, -0.3]])
    assert np.allclose(np.linalg.eigvalsh(H), [-0.5, 0.5])


def test_hamiltonian_diagonal_cases():
    assert np.allclose(hamiltonian_diabatic(const(0.7, 0.0), 0.0), np.diag([0.7, -0.7]))
    p = get_model("ellipse", {"Delta0": 0.5, "Omega0": 0.2})
    assert np.allclose(hamiltonian_diabatic(p, 0.0), np.diag([0.5, -0.5]))
    assert hamiltonian_diabatic(p, p.grid(5)).shape == (5, 2, 2)


def test_eigenstructure_values():
    es = eigenstructure(const(0.3, 0.4), 0.0)
    assert es.e_plus == pytest.approx(0.5) and es.e_plus + es.e_minus == 0.0
    H = hamiltonian_diabatic(const(0.3, 0.4), 0.0)
    assert np.allclose(H @ es.chi_plus, 0.5 * es.chi_plus)
    assert np.allclose(H @ es.chi_minus, -0.5 * es.chi_minus)


def test_eigenvectors_at_zero_and_pi():
    es = eigenstructure(const(1.0, 0.0), 0.0)
    assert np.allclose(es.chi_plus, [1, 0]) and np.allclose(es.chi_minus, [0, 1])
    es = eigenstructure(const(-1.0, 0.0), 0.0)
    # labels swapped relative to the diabatic basis
    assert np.allclose(es.chi_plus, [0, 1]) and np.allclose(es.chi_minus, [-1, 0])


def test_eigenvector_sign_continuity_on_grid():
    p = get_model("limacon")
    es = eigenstructure(p, p.grid(400))
    for chi in (es.chi_plus, es.chi_minus):
        assert np.all(np.sum(chi[1:] * chi[:-1], axis=1) > 0)


def test_eigenstructure_refuses_crossing():
    with pytest.raises(RegularityError):
        eigenstructure(get_model("cardioid"), math.pi)


def test_landau_zener_coupling_lorentzian():
    d0, o0 = 2.0, 0.7
    p = get_model("landau_zener", {"Delta0": d0, "Omega0": o0})
    t = np.linspace(-5, 5, 11)
    expected = -d0 * o0 / (2 * (d0**2 * t**2 + o0**2))
    assert np.allclose(adiabatic_coupling(p, t), expected, rtol=1e-14)


def test_coupling_special_cases():
    assert adiabatic_coupling(const(1.0, 2.0), 0.3) == 0.0
    circle = get_model("circle", {"Delta0": 3.0})
    assert np.allclose(np.abs(adiabatic_coupling(circle, circle.grid(9))), 0.5)


@pytest.mark.parametrize("name", REGULAR_MODELS)
def test_coupling_matches_angle_derivative(name):
    p = get_model(name)
    ts = p.grid(41)[2:-2]
    g = adiabatic_coupling(p, ts)
    fd = coupling_from_angle(p, ts)
    assert np.allclose(fd, g, rtol=1e-6, atol=1e-6 * np.max(np.abs(g)))


def test_basis_transform():
    assert np.allclose(basis_transform(const(1.0, 0.0), 0.0), np.eye(2))
    assert np.allclose(basis_transform(const(-1.0, 0.0), 0.0), [[0, -1], [1, 0]])
    p = get_model("lissajous")
    ts = np.random.default_rng(1).uniform(p.t_i, p.t_f, 50)
    U = basis_transform(p, np.sort(ts))
    assert np.allclose(np.einsum("nji,njk->nik", U, U), np.eye(2), atol=1e-14)
    assert np.allclose(np.linalg.det(U), 1.0)


# --------------------------------------------------------------------------
# adiabaticity margin


def test_margin_equals_abs_curvature():
    p = get_model("lissajous")
    ts = np.random.default_rng(7).uniform(p.t_i, p.t_f, 100)
    assert np.allclose(adiabaticity_margin(p, ts), np.abs(curvature(p, ts)), rtol=1e-12, atol=0)


def test_margin_circle_and_ellipse():
    circle = get_model("ellipse", {"Delta0": 4.0, "Omega0": 4.0})
    assert np.allclose(adiabaticity_margin(circle, circle.grid(11)), 0.25)
    t, m = max_adiabaticity_margin(get_model("ellipse"))
    assert m == pytest.approx(6.0, abs=1e-12)
    assert min(abs(t), abs(t - math.pi)) < 1e-6


# --------------------------------------------------------------------------
# propagation


def test_uncoupled_diabatic_phase_evolution():
    d = 0.8
    p = const(d, 0.0, (1.0, 4.0))
    psi0 = StateVector("diabatic", 0.6, 0.8j)
    for frame in ("rotating", "lab"):
        traj = propagate(p, psi0, basis="diabatic", frame=frame, n_out=7)
        expected = 0.6 * np.exp(-1j * d * (traj.t - 1.0))
        assert np.allclose(traj.amplitudes[:, 0], expected, atol=1e-9)
        assert np.allclose(traj.populations, [[0.36, 0.64]] * 7, atol=1e-12)


def test_landau_zener_probability():
    p = get_model("landau_zener", window=(-200, 200))
    P = transition_probability(p, rtol=1e-10)
    assert abs(P / LZ_P_ASYMPTOTIC - 1) < 0.02
    assert P == pytest.approx(LZ_P_WINDOW_200, rel=1e-6)


def test_zero_coupling_gives_zero_probability():
    assert transition_probability(expression_protocol("1 + t", "2*(1 + t)", (0, 3))) == pytest.approx(0, abs=1e-15)


@pytest.mark.parametrize("d0", [1.0, 2.0, 4.0, 8.0])
def test_circle_matches_rabi_formula(d0):
    P = transition_probability(get_model("circle", {"Delta0": d0}), rtol=1e-11)
    assert P == pytest.approx(circle_rabi_probability(d0), abs=1e-9)


def test_circle_adiabatic_limit_monotone():
    Ps = [transition_probability(get_model("circle", {"Delta0": d})) for d in (1, 2, 4, 8)]
    assert all(a > b for a, b in zip(Ps, Ps[1:]))


def test_ellipse_radius_adiabatic_limit():
    Ps = [transition_probability(get_model("ellipse", {"Delta0": r, "Omega0": r})) for r in (1, 2, 4, 8)]
    assert all(a > b for a, b in zip(Ps, Ps[1:]))


@pytest.mark.parametrize("name", REGULAR_MODELS)
def test_unitarity_and_gauge_consistency(name):
    p = get_model(name)
    a = propagate(p)
    d = propagate(p, basis="diabatic")
    assert a.norm_drift <= 1e-8 and d.norm_drift <= 1e-8
    assert np.max(np.abs(adiabatic_populations(p, d) - a.populations)) <= 1e-6
    assert abs(a.P - d.P) <= 1e-6


def test_drift_shrinks_with_tolerance():
    # tolerance-limited steps: no step cap, no intermediate outputs
    p = get_model("parabolic")
    runs = [
        propagate(p, basis="diabatic", frame="lab", rtol=rt, atol=rt * 1e-3, n_out=2, max_step=math.inf)
        for rt in (1e-6, 1e-8, 1e-10)
    ]
    drift = [r.norm_drift for r in runs]
    assert drift[0] > 30 * drift[1] > 900 * drift[2]


def test_frames_agree():
    p = get_model("lissajous")
    r = propagate(p, rtol=1e-11, atol=1e-13)
    lab = propagate(p, frame="lab", rtol=1e-11, atol=1e-13)
    assert np.allclose(r.amplitudes, lab.amplitudes, atol=1e-8)


def test_initial_state_conversion():
    p = get_model("limacon")  # theta(0) = pi/2: bases differ at t_i
    es = eigenstructure(p, p.t_i)
    c0 = StateVector("diabatic", *es.chi_minus)
    d = propagate(p, c0, basis="adiabatic")
    a = propagate(p)
    assert np.allclose(d.amplitudes, a.amplitudes, atol=1e-12)


def test_default_initial_condition_is_lower_adiabatic_state():
    traj = propagate(get_model("ellipse"), n_out=3)
    assert np.allclose(traj.populations[0], [0, 1])
    assert traj.t[0] == 0.0 and traj.t[-1] == pytest.approx(2 * math.pi)


def test_output_grid_includes_endpoints():
    p = get_model("ellipse")
    traj = propagate(p, t_eval=[1.0, 2.0])
    assert list(traj.t) == [0.0, 1.0, 2.0, p.t_f]


def test_adiabatic_propagation_refuses_crossing():
    with pytest.raises(RegularityError):
        propagate(get_model("cardioid"))


def test_diabatic_propagation_through_crossing():
    traj = propagate(get_model("cardioid"), StateVector("diabatic", 1, 0), basis="diabatic")
    assert traj.norm_drift <= 1e-8 and math.isnan(traj.P)


def test_argument_validation():
    with pytest.raises(SpecError):
        StateVector("bloch", 1, 0)
    with pytest.raises(SpecError):
        StateVector("diabatic", 0, 0).normalized()
    with pytest.raises(SpecError):
        propagate(get_model("ellipse"), basis="bloch")
    with pytest.raises(SpecError):
        propagate(get_model("ellipse"), rtol=0)


# --------------------------------------------------------------------------
# passage classification


def test_ellipse_population_return():
    rep = classify_passage(get_model("ellipse"))
    assert rep.passage_class == "population_return"
    assert rep.delta_theta == pytest.approx(2 * math.pi, abs=1e-9)
    assert rep.identity_residual <= 1e-8


def test_limacon_endpoints_equal_superpositions():
    rep = classify_passage(get_model("limacon"))
    assert rep.theta_initial == pytest.approx(math.pi / 2)
    assert rep.weights_initial == pytest.approx((0.5, 0.5))
    assert rep.weights_final == pytest.approx((0.5, 0.5))
    assert rep.endpoint_ratio_initial is None  # Delta(0) = 0


def test_landau_zener_swap_needs_small_endpoint_ratio():
    wide = classify_passage(get_model("landau_zener", endpoint_ratio=1e-4))
    assert wide.passage_class == "label_swap"
    assert wide.bases_coincide_initial and wide.bases_coincide_final
    short = classify_passage(get_model("landau_zener", endpoint_ratio=1e-1))
    assert short.passage_class == "generic" and short.nearest == "label_swap"


def test_quarter_turn_equal_superposition():
    rep = classify_passage(expression_protocol("cos(t)", "sin(t)", (0, math.pi / 2)))
    assert rep.passage_class == "equal_superposition"


def test_constant_protocol_returns():
    rep = classify_passage(const(1.0, 0.5))
    assert rep.delta_theta == 0.0 and rep.passage_class == "population_return"


def test_report_serialises():
    d = classify_passage(get_model("parabolic")).as_dict()
    assert {"delta_theta", "class", "nearest", "endpoint_ratio", "diabatic_weights"} <= set(d)
