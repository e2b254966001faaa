import math

import numpy as np
import pytest

from nlpcanon.errors import ActivityError, DomainError, ParseError, UnknownVariable
from nlpcanon.expr import Binary, Const, Pow, Unary, Var, evaluate, max_variable, parse_expr, parse_problem, pretty


@pytest.mark.parametrize(
    "text, x, expected",
    [
        ("x1^2 + 2*x2", (1.0, 1.0), 3.0),
        ("-x1^2", (3.0,), -9.0),  # ^ binds tighter than unary minus
        ("x1 - x2 - 1", (5.0, 1.0), 3.0),  # left associative
        ("x1 / x2 / 2", (8.0, 2.0), 2.0),
        ("2^3^2", (), 64.0),  # ^ associates to the left
        ("sin(x1)^2 + cos(x1)^2", (0.7,), 1.0),
        ("exp(log(x1)) + sqrt(x2)", (2.5, 9.0), 5.5),
        ("(x1 + 1) * (x1 - 1)", (3.0,), 8.0),
        ("1.5e-1 * x1", (2.0,), 0.3),
    ],
)
def test_evaluation(text, x, expected):
    e = parse_expr(text, len(x))
    assert math.isclose(e(x), expected, rel_tol=1e-12, abs_tol=1e-15)


def test_tree_shape():
    e = parse_expr("x1 + x2*x3", 3)
    assert e == Binary("+", Var(1), Binary("*", Var(2), Var(3)))
    assert parse_expr("-x1^2", 1) == Unary("neg", Pow(Var(1), 2))
    assert max_variable(parse_expr("x3 + 1", 3)) == 3


@pytest.mark.parametrize(
    "text", ["x1^2 + 2*x2", "-(x1 - x2)^3", "sin(x1 * x2) / (1 + x2^2)", "x1 - (x2 - x1)", "2^3^2", "x1 / (x2 / x1)"]
)
def test_pretty_round_trip(text):
    e = parse_expr(text, 2)
    again = parse_expr(pretty(e), 2)
    assert again == e


@pytest.mark.parametrize(
    "text, offset",
    [("x1 +", 4), ("x1 * * x2", 5), ("x1^1.5", 3), ("(x1", 3), ("x1 $ 2", 3)],
)
def test_parse_error_offsets(text, offset):
    with pytest.raises(ParseError) as info:
        parse_expr(text, 2)
    assert info.value.offset == offset


def test_unknown_variable():
    with pytest.raises(UnknownVariable):
        parse_expr("x1 + y", 2)


@pytest.mark.parametrize("text, x", [("1/x1", (0.0,)), ("log(x1)", (0.0,)), ("sqrt(x1)", (-1.0,))])
def test_domain_errors(text, x):
    with pytest.raises(DomainError):
        parse_expr(text, 1)(x)


def test_problem_document():
    doc = parse_problem(
        "# comment\nvars a b\nradius 0.5\nobjective a^2 + b\neq e1: a - b\nineq i1: b^2 - a  # trailing\n"
    )
    assert doc.variables == ("a", "b")
    assert doc.radius == 0.5
    assert [n for n, _ in doc.equalities] == ["e1"]
    assert [n for n, _ in doc.inequalities] == ["i1"]
    assert evaluate(doc.objective, (2.0, 1.0)) == 5.0


@pytest.mark.parametrize(
    "text",
    [
        "radius 1\nobjective 0\n",  # no vars
        "vars x\nobjective x\n",  # no radius
        "vars x\nradius 1\n",  # no objective
        "vars x\nradius -1\nobjective x\n",
        "vars x\nradius 1\nobjective x\nineq x\n",  # no colon
        "vars x\nradius 1\nobjective x\nfoo x\n",
        "vars x\nradius 1\nobjective x\nineq a: x\nineq a: 2*x\n",
    ],
)
def test_malformed_documents(text):
    with pytest.raises(ParseError):
        parse_problem(text)


def test_inactive_constraint():
    with pytest.raises(ActivityError):
        parse_problem("vars x\nradius 1\nobjective x\nineq g: x - 1\n")


def test_base_point_shift():
    doc = parse_problem("vars x\nradius 1\npoint 1\nobjective x\nineq g: x - 1\n")
    assert doc.point == (1.0,)


def test_error_offset_in_document():
    text = "vars x\nradius 1\nobjective x + * 2\n"
    with pytest.raises(ParseError) as info:
        parse_problem(text)
    assert text.encode()[info.value.offset : info.value.offset + 1] == b"*"


def test_const_node():
    assert Const(2.0)(()) == 2.0
    assert np.isclose(parse_expr("x1*x1", 1)((np.float64(3.0),)), 9.0)
