import numpy as np
import pytest

from nlpcanon.canonical_form import (
    build_canonical_chart,
    canonical_residuals,
    restrict_to_w,
    select_rank_completing_inequalities,
)
from nlpcanon.change_of_vars import _ball_points
from nlpcanon.errors import RankDeficientEqualities
from nlpcanon.problem import NLPInstance

from conftest import problem


def make(ineqs, eqs=(), n=3, objective="x1"):
    names = " ".join(f"x{i + 1}" for i in range(n))
    lines = [f"vars {names}", "radius 1", f"objective {objective}"]
    lines += [f"eq h{j + 1}: {e}" for j, e in enumerate(eqs)]
    lines += [f"ineq g{l + 1}: {g}" for l, g in enumerate(ineqs)]
    return NLPInstance.from_text("\n".join(lines) + "\n")


@pytest.mark.parametrize(
    "ineqs, eqs, perm, r",
    [
        (("x2", "x2 + x3^2"), ("x1 + x2 + x3^2",), (0, 1), 1),
        (("x2 + x3^2", "x2"), ("x1 + x2 + x3^2",), (0, 1), 1),
        (("x1", "2*x1 + x2^2"), ("x1",), (0, 1), 0),
        (("x1^2", "x3", "x2"), (), (1, 2, 0), 2),
    ],
)
def test_selection(ineqs, eqs, perm, r):
    assert select_rank_completing_inequalities(make(ineqs, eqs)) == (perm, r)


def test_rank_deficient_equalities():
    with pytest.raises(RankDeficientEqualities):
        build_canonical_chart(problem("rank_deficient.nlp"))


def test_closed_form_chart():
    chart = build_canonical_chart(problem("chart3.nlp"))
    for u in _ball_points(3, chart.radius, 100, 9):
        y, z, w = u
        assert np.max(np.abs(chart.q(u) - [y - z - w * w, z, w])) <= 1e-10
    res = canonical_residuals(chart, 100)
    assert res.h_residual <= 1e-9 and res.g_residual <= 1e-9
    assert res.dwc_ad <= 1e-6 and res.dwc_fd <= 1e-6
    assert res.block_rank_mismatches == 0
    R = restrict_to_w(chart)
    np.testing.assert_allclose(R.c_hessians[0], [[2.0]], atol=1e-12)


def test_two_variable_chart():
    chart = build_canonical_chart(problem("chart2.nlp"))
    for z, w in _ball_points(2, chart.radius, 50, 1):
        assert abs(chart.c[0]([z, w]) - (z + w * w)) <= 1e-12
    assert canonical_residuals(chart).passed()


def test_linear_chart_is_exact():
    P = make((), ("x1 + 2*x2 - x3", "x2 + x3"))
    chart = build_canonical_chart(P)
    res = canonical_residuals(chart)
    assert res.h_residual <= 1e-14
    assert chart.r == 0 and chart.k == 1


def test_excluded_points_are_counted():
    chart = build_canonical_chart(problem("chart3.nlp"))
    res = canonical_residuals(chart, points=[[0.0, 0.0, 0.1], [10.0, 0.0, 0.0]])
    assert res.evaluated == 1 and res.excluded == 1


def test_restriction_worked(worked):
    chart = build_canonical_chart(worked)
    R = restrict_to_w(chart)
    np.testing.assert_allclose(R.f_hessian, 2 * np.eye(2), atol=1e-12)
    np.testing.assert_allclose(R.c_hessians[0], [[0, 1], [1, 0]], atol=1e-12)
    assert R.fd_discrepancy <= 1e-6


def test_objective_independent_of_w():
    chart = build_canonical_chart(problem("chart3.nlp"))
    R = restrict_to_w(chart, objective=lambda x: x[1] * 3.0)
    np.testing.assert_allclose(R.f_hessian, 0.0, atol=1e-14)


def test_chart_hessians_exact_vs_fd():
    P = make(("x2 + sin(x3)^2", "x2 + x3^2 + x1*x3"), ("x1 + x2 + x3^2 + x1*x2",), objective="x3^2 + x1*x3")
    chart = build_canonical_chart(P)
    R = restrict_to_w(chart)
    assert R.fd_discrepancy <= 1e-6
