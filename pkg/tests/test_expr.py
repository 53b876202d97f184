import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relmech import JetPoint1, ad
from relmech.expr import (
    Add,
    Call,
    Const,
    Div,
    EvaluationError,
    ExprSyntaxError,
    Mul,
    Neg,
    Num,
    Pow,
    Sub,
    UnknownIdentifierError,
    Var,
    VariableIndexError,
    eval_ad,
    parse_expression,
    to_source,
)


def ast(src, m=2, constants=None):
    return parse_expression(src, m, constants).ast


@pytest.mark.parametrize(
    "src, m, tree",
    [
        ("2*v1 + q2^2", 2, Add(Mul(Num(2.0), Var("v", 1)), Pow(Var("q", 2), Num(2.0)))),
        ("sin(t)*q1", 1, Mul(Call("sin", Var("t")), Var("q", 1))),
        ("-q1^2", 1, Neg(Pow(Var("q", 1), Num(2.0)))),
        ("q1 - q1 - q1", 1, Sub(Sub(Var("q", 1), Var("q", 1)), Var("q", 1))),
        ("q1/t/2", 1, Div(Div(Var("q", 1), Var("t")), Num(2.0))),
        ("2^3^2", 1, Pow(Num(2.0), Pow(Num(3.0), Num(2.0)))),
        ("2**-t", 1, Pow(Num(2.0), Neg(Var("t")))),
        ("pi", 1, Const("pi", math.pi)),
    ],
)
def test_precedence_and_associativity(src, m, tree):
    assert ast(src, m) == tree


def test_named_constants_are_bound_at_parse_time():
    e = parse_expression("omega*q1", 1, {"omega": 2.5})
    assert e.ast == Mul(Const("omega", 2.5), Var("q", 1))
    assert e(0.0, [4.0]) == 10.0


def test_variable_index_out_of_range():
    with pytest.raises(VariableIndexError) as info:
        parse_expression("q3", 2)
    assert (info.value.line, info.value.column) == (1, 1)


@pytest.mark.parametrize(
    "src, err, col",
    [
        ("q1 +", ExprSyntaxError, 5),
        ("(q1", ExprSyntaxError, 4),
        ("q1 $ 2", ExprSyntaxError, 4),
        ("2*foo", UnknownIdentifierError, 3),
        ("tan(q1)", UnknownIdentifierError, 1),
        ("q0", VariableIndexError, 1),
    ],
)
def test_errors_carry_location(src, err, col):
    with pytest.raises(err) as info:
        parse_expression(src, 1)
    assert info.value.column == col


def test_error_on_second_line():
    with pytest.raises(ExprSyntaxError) as info:
        parse_expression("q1 +\n  * 2", 1)
    assert info.value.line == 2


def test_empty_source():
    with pytest.raises(ExprSyntaxError):
        parse_expression("  ", 1)


def test_eval_ad_identity():
    y = eval_ad(parse_expression("v1", 1), JetPoint1(0.0, [1.0], [4.0]), ["v1"])
    assert y.value == 4.0 and list(y.grad) == [1.0]


def test_eval_ad_product_rule():
    y = eval_ad(parse_expression("q1*v1", 1), JetPoint1(0.0, [2.0], [3.0]), ["q1", "v1"])
    assert y.value == 6.0 and list(y.grad) == [3.0, 2.0]


def test_eval_ad_time_seed():
    p = JetPoint1(math.pi / 2, [2.0], [0.0])
    y = eval_ad(parse_expression("sin(t)*q1", 1), p, ["t"])
    assert y.value == pytest.approx(2.0)
    assert y.grad[0] == pytest.approx(0.0, abs=1e-15)
    (g,) = ad.fd_gradient(lambda t: math.sin(t) * 2.0, [math.pi / 2])
    assert abs(y.grad[0] - g) <= 1e-6


def test_seed_order_is_respected():
    e = parse_expression("q1*q1*v1", 1)
    y = eval_ad(e, JetPoint1(0.0, [2.0], [3.0]), ["v1", "q1"])
    assert list(y.grad) == [4.0, 12.0]


def test_eval_ad_without_seeds_is_plain_evaluation():
    e = parse_expression("exp(q1)*cos(v2) - t/3", 2)
    p = JetPoint1(0.4, [0.1, 0.2], [0.3, 0.9])
    y = eval_ad(e, p, [])
    assert y.value == e(p.t, list(p.q), list(p.v))
    assert list(y.grad) == []


def test_domain_error_names_the_subexpression():
    e = parse_expression("1 + log(q1 - 1)", 1)
    with pytest.raises(EvaluationError) as info:
        e(0.0, [0.5])
    assert info.value.subexpression == "log(q1 - 1)"


def test_division_by_zero():
    with pytest.raises(EvaluationError):
        parse_expression("1/(q1 - q1)", 1)(0.0, [1.0])


def test_vectorised_evaluation():
    e = parse_expression("q1*sin(t) + v1^2", 1)
    t = np.linspace(0, 1, 7)
    out = e(t, [np.ones(7)], [2 * np.ones(7)])
    np.testing.assert_allclose(out, np.sin(t) + 4.0)


def test_velocity_detection():
    assert parse_expression("q1 + t", 2).uses_velocity() is False
    assert parse_expression("q1 + v2", 2).uses_velocity() is True
    assert parse_expression("q1 + v2", 2).variables == {"q1", "v2"}


# -- round trip -------------------------------------------------------------

_leaves = st.one_of(
    st.integers(0, 20).map(lambda k: Num(float(k))),
    st.sampled_from([0.5, 1.25, 1e-3, 2.5e20]).map(Num),
    st.just(Var("t")),
    st.sampled_from([Var("q", 1), Var("q", 2), Var("v", 1), Var("v", 2)]),
    st.just(Const("pi", math.pi)),
)


def _extend(children):
    return st.one_of(
        st.builds(Neg, children),
        st.builds(Call, st.sampled_from(["sin", "cos", "exp", "log", "sqrt"]), children),
        *(st.builds(op, children, children) for op in (Add, Sub, Mul, Div, Pow)),
    )


trees = st.recursive(_leaves, _extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_print_parse_round_trip(tree):
    src = to_source(tree)
    assert ast(src) == tree


@settings(max_examples=100, deadline=None)
@given(trees)
def test_printing_is_idempotent(tree):
    once = to_source(ast(to_source(tree)))
    assert to_source(ast(once)) == once
