import numpy as np
import pytest
from scipy.optimize import linprog

from nlpcanon import autodiff
from nlpcanon.change_of_vars import random_diffeomorphism, transform_problem
from nlpcanon.errors import HypothesisViolated, NegativeMultiplier, SeparationFailed
from nlpcanon.linalg import lambda_min
from nlpcanon.nlp_analysis import (
    andreani_certificate,
    check_mfcq,
    check_rank_deviation,
    combined_jacobian,
    kkt_residual,
    second_order_term,
    tangent_kernel_basis,
    verify_weak_second_order,
)
from nlpcanon.problem import NLPInstance

from conftest import problem


def test_combined_jacobian(worked):
    a, b = 0.3, -0.7
    np.testing.assert_allclose(combined_jacobian(worked, [0, a, b]), [[1, 0, 0], [1, b, a]])
    J0 = combined_jacobian(worked)
    np.testing.assert_allclose(J0, [[1, 0, 0], [1, 0, 0]])
    P = NLPInstance.from_text("vars x\nradius 1\nobjective x\n")
    assert combined_jacobian(P).shape == (0, 1)


def test_kkt_residual(worked):
    assert kkt_residual(worked, None, None, [2.0, 0.0]) == 0.0
    assert kkt_residual(worked, None, None, [0.0, 0.0]) == 2.0
    with pytest.raises(NegativeMultiplier):
        kkt_residual(worked, None, None, [-1.0, 0.0])


@pytest.mark.parametrize("mu, d, value", [([2, 0], [0, 1, 1], 4.0), ([0, 2], [0, 1, -1], 0.0), ([2, 0], [0, 0, 0], 0.0)])
def test_second_order_term(worked, mu, d, value):
    assert abs(second_order_term(worked, np.zeros(3), None, mu, d) - value) <= 1e-14


def test_tangent_kernel(worked):
    np.testing.assert_allclose(tangent_kernel_basis(worked), [[0, 0], [1, 0], [0, 1]])
    P = NLPInstance.from_text("vars x y\nradius 1\nobjective x\neq a: x\nineq b: y\n")
    assert tangent_kernel_basis(P).shape == (2, 0)
    P = NLPInstance.from_text("vars x y\nradius 1\nobjective x\n")
    np.testing.assert_allclose(tangent_kernel_basis(P), np.eye(2))


def mfcq_lp_oracle(P):
    """Same LP solved by scipy's HiGHS."""
    x0 = np.zeros(P.n)
    Dh = autodiff.jacobian(P.equalities, x0)
    Dg = autodiff.jacobian(P.inequalities, x0)
    c = np.zeros(P.n + 1)
    c[-1] = -1
    kw = {}
    if P.m:
        kw.update(A_eq=np.hstack([Dh, np.zeros((P.m, 1))]), b_eq=np.zeros(P.m))
    if P.n_ineq:
        kw.update(A_ub=np.hstack([Dg, np.ones((P.n_ineq, 1))]), b_ub=np.zeros(P.n_ineq))
    res = linprog(c, bounds=[(-1, 1)] * P.n + [(None, 1)], method="highs", **kw)
    return -res.fun


@pytest.mark.parametrize(
    "name, satisfied", [("mfcq_ok.nlp", True), ("mfcq_opposing.nlp", False), ("rank_deficient.nlp", False)]
)
def test_check_mfcq(name, satisfied):
    P = problem(name)
    rep = check_mfcq(P)
    assert rep.satisfied == satisfied
    if rep.satisfied:
        Dh = autodiff.jacobian(P.equalities, np.zeros(P.n))
        assert np.max(np.abs(Dh @ rep.witness)) <= 1e-10
        assert rep.margin >= 1e-6
        assert abs(np.max(np.abs(rep.witness)) - 1) <= 1e-12
        assert abs(rep.margin - mfcq_lp_oracle(P)) <= 1e-9


def test_rank_deviation(worked):
    holds, rank = check_rank_deviation(worked)
    assert holds and rank == 2
    P = NLPInstance.from_text("vars x1 x2\nradius 1\nobjective x1\nineq a: x1^2\nineq b: x2^2\n")
    assert tuple(check_rank_deviation(P)) == (False, 2)
    assert check_rank_deviation(problem("linear.nlp")).holds
    with pytest.raises(ValueError):
        check_rank_deviation(worked, samples=10)


def test_worked_certificate(worked):
    cert = andreani_certificate(worked)
    np.testing.assert_allclose(cert.alphas, [1.0])
    np.testing.assert_allclose(cert.H, [[0, 1], [1, 0]])
    assert cert.interval == pytest.approx((0.0, 2.0))
    assert abs(cert.gamma_star) <= 1e-6
    np.testing.assert_allclose(cert.mu, [2.0, 0.0], atol=1e-8)
    assert np.all(cert.mu >= 0)
    assert cert.kkt_residual <= 1e-8
    assert abs(cert.gamma_from_mu - cert.gamma_star) <= 1e-8
    assert lambda_min(cert.F + cert.gamma_star * cert.H) >= -1e-8
    rep = verify_weak_second_order(worked, cert, 1000)
    assert rep.passed and rep.min_value >= -1e-8


def test_weak_second_order_at_gamma_two(worked):
    cert = andreani_certificate(worked)
    cert.mu = np.array([0.0, 2.0])
    assert second_order_term(worked, np.zeros(3), None, cert.mu, [0, 1, -1]) == 0.0
    assert verify_weak_second_order(worked, cert).passed


def test_saddle_separation_failure(saddle):
    with pytest.raises(SeparationFailed) as info:
        andreani_certificate(saddle)
    np.testing.assert_allclose(np.abs(info.value.witness), [0, 0, 1], atol=1e-8)
    assert info.value.details["max_form_on_interval"] < 0
    assert not info.value.details["minimality"]["holds"]
    rep = verify_weak_second_order(saddle, info.value)
    assert not rep.passed and rep.min_value < 0


def test_no_residual_constraints():
    cert = andreani_certificate(problem("linear.nlp"))
    assert cert.gamma_star == 0.0 and len(cert.alphas) == 0


def test_hypothesis_failures():
    with pytest.raises(HypothesisViolated):
        andreani_certificate(problem("mfcq_opposing.nlp"))
    P = NLPInstance.from_text("vars x1 x2\nradius 1\nobjective x1^2 + x2^2\nineq a: x1^2\nineq b: x2^2\n")
    with pytest.raises(HypothesisViolated):
        andreani_certificate(P)


def test_pipeline_invariance(worked):
    for s in range(3):
        T = transform_problem(worked, random_diffeomorphism(3, seed=s))
        cert = andreani_certificate(T, minimality_samples=500)
        assert verify_weak_second_order(T, cert).passed


def test_eq_weak_equivalence_through_chart(worked):
    from nlpcanon.canonical_form import build_canonical_chart, restrict_to_w

    cert = andreani_certificate(worked)
    chart = build_canonical_chart(worked)
    R = restrict_to_w(chart)
    Ft = R.f_hessian + cert.gamma_star * cert.H
    Dq = chart.q.derivative(np.zeros(3))
    rng = np.random.default_rng(0)
    for _ in range(100):
        dt = rng.standard_normal(chart.k)
        d = Dq @ chart.chart_point(w=dt)
        S = second_order_term(worked, np.zeros(3), cert.lam, cert.mu, d)
        assert abs(S - dt @ Ft @ dt) <= 1e-8 * (1 + abs(S))
