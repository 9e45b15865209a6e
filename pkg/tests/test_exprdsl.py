import math

import numpy as np
import pytest

from adiacurve.errors import SpecError
from adiacurve.exprdsl import (
    Binary,
    Const,
    DomainError,
    ExprSyntaxError,
    MAX_TREE_DEPTH,
    Param,
    Unary,
    UnknownSymbol,
    Var,
    eval_dual,
    format_expr,
    free_parameters,
    parse_expression,
)


def test_precedence_and_associativity():
    assert parse_expression("1+2*t") == Binary("+", Const(1.0), Binary("*", Const(2.0), Var()))
    assert parse_expression("1-2-3") == Binary("-", Binary("-", Const(1.0), Const(2.0)), Const(3.0))
    # exponent binds right and tighter than unary minus on its left
    assert parse_expression("2^3^t") == Binary("^", Const(2.0), Binary("^", Const(3.0), Var()))
    assert parse_expression("-t^2") == Unary("neg", Binary("^", Var(), Const(2.0)))


def test_polynomial_value_and_derivative():
    assert eval_dual(parse_expression("t^2"), 3.0) == (9.0, 6.0)


def test_chain_rule_against_hand_derivative():
    tree = parse_expression("a*cos(n*t + d)")
    params = {"a": 1.5, "n": 0.9, "d": math.pi / 2}
    v, dv = eval_dual(tree, math.pi, params)
    assert v == pytest.approx(1.5 * math.cos(0.9 * math.pi + math.pi / 2), abs=1e-15)
    assert dv == pytest.approx(-1.5 * 0.9 * math.sin(0.9 * math.pi + math.pi / 2), abs=1e-15)


def test_vectorised_evaluation_matches_scalar():
    tree = parse_expression("exp(-t^2/2)*sin(3*t) + sqrt(1+t^2)")
    ts = np.linspace(-2, 2, 7)
    v, d = eval_dual(tree, ts)
    for k, t in enumerate(ts):
        vs, ds = eval_dual(tree, float(t))
        assert v[k] == pytest.approx(vs, rel=1e-15)
        assert d[k] == pytest.approx(ds, rel=1e-14, abs=1e-15)


def test_derivative_matches_finite_difference():
    tree = parse_expression("tan(t/3) + t^t + abs(t - 5) / (1 + t)")
    h = 1e-5
    for t in (0.3, 1.1, 2.7):
        fd = (eval_dual(tree, t + h)[0] - eval_dual(tree, t - h)[0]) / (2 * h)
        assert eval_dual(tree, t)[1] == pytest.approx(fd, rel=1e-8)


def test_constants_pi_and_e():
    assert eval_dual(parse_expression("pi*e"), 0.0)[0] == pytest.approx(math.pi * math.e)
    assert free_parameters(parse_expression("pi*a + e*t")) == {"a"}


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse_expression("sin(")
    assert info.value.offset == 4
    with pytest.raises(ExprSyntaxError) as info:
        parse_expression("1 + * 2")
    assert info.value.offset == 4
    assert "number" in info.value.expected


def test_unknown_symbol_with_declared_parameters():
    with pytest.raises(UnknownSymbol) as info:
        parse_expression("foo*t", ["a"])
    assert info.value.name == "foo"
    with pytest.raises(UnknownSymbol):
        parse_expression("bar(t)")


def test_domain_errors_name_the_subexpression():
    with pytest.raises(DomainError) as info:
        eval_dual(parse_expression("1 + sqrt(t - 5)"), 1.0)
    assert "sqrt(t - 5)" in str(info.value)
    with pytest.raises(DomainError):
        eval_dual(parse_expression("1/t"), 0.0)
    with pytest.raises(DomainError):
        eval_dual(parse_expression("exp(t)"), 1000.0)
    with pytest.raises(DomainError):
        eval_dual(parse_expression("(-2)^0.5"), 0.0)


def test_non_ascii_and_non_finite_literals_rejected():
    with pytest.raises(ExprSyntaxError):
        parse_expression("t·2")
    with pytest.raises(ExprSyntaxError):
        parse_expression("1e999")


def test_nesting_limits_raise_syntax_errors():
    with pytest.raises(ExprSyntaxError):
        parse_expression("(" * 500 + "t" + ")" * 500)
    with pytest.raises(ExprSyntaxError):
        parse_expression("+".join(["t"] * (MAX_TREE_DEPTH + 5)))


def test_errors_are_spec_errors():
    assert issubclass(ExprSyntaxError, SpecError)
    assert issubclass(UnknownSymbol, SpecError)


@pytest.mark.parametrize(
    "text",
    [
        "Delta0*t",
        "-b*sin(omega*t) - a*sin(2*omega*t)",
        "(a - b)*(c + d)",
        "a/(b*c)",
        "a - (b - c)",
        "2^-t",
        "(-2)^t",
        "--t",
        "t^(1/2)",
        "exp(-(t/tau)^2)",
        "1.5e-3*t + 0.25",
    ],
)
def test_format_round_trip(text):
    tree = parse_expression(text)
    out = format_expr(tree)
    assert parse_expression(out) == tree
    assert format_expr(parse_expression(out)) == out


def test_format_minimal_parentheses():
    assert format_expr(parse_expression("((a)*((t)))+(1)")) == "a*t + 1"
    assert format_expr(parse_expression("a-(b+c)")) == "a - (b + c)"
    assert format_expr(Binary("^", Param("x"), Const(2.0))) == "x^2"
