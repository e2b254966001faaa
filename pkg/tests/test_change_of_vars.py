import numpy as np
import pytest

from nlpcanon import autodiff
from nlpcanon.change_of_vars import (
    Diffeomorphism,
    random_diffeomorphism,
    transform_problem,
    verify_chain_rules,
    verify_multiplier_invariance,
    verify_second_order_invariance,
)
from nlpcanon.errors import GenerationFailed, PreconditionFailed, RadiusError
from nlpcanon.expr import parse_expr
from nlpcanon.nlp_analysis import check_mfcq
from nlpcanon.problem import NLPInstance, kkt_residual, tangent_kernel_basis


def scalar_quadratic_root(a, x):
    """Root of y + a y^2 = x nearest 0 by the quadratic formula."""
    return (-1.0 + np.sqrt(1.0 + 4.0 * a * x)) / (2.0 * a)


@pytest.mark.parametrize("a", [0.1, 1.0])
def test_scalar_newton_inverse(a):
    q = Diffeomorphism.quadratic([[1.0]], [[[1.0]]], a, radius=1.0)
    assert abs(q.inverse([0.1])[0] - scalar_quadratic_root(a, 0.1)) <= 1e-12


def test_scalar_inverse_values():
    # y + 0.1 y^2 = 0.1 has root 0.0990195...; 0.09161 is the root of y + y^2 = 0.1
    assert abs(scalar_quadratic_root(0.1, 0.1) - 0.0990195135927848) < 1e-12
    assert abs(scalar_quadratic_root(1.0, 0.1) - 0.0916079783099616) < 1e-12


def test_magnitude_zero_is_linear(rng):
    q = random_diffeomorphism(3, seed=4, magnitude=0.0)
    y = rng.standard_normal(3) * 0.1
    np.testing.assert_allclose(q(y), q.params["A"] @ y, atol=1e-15)
    np.testing.assert_allclose(q.inverse(q(y)), y, atol=1e-13)
    assert np.linalg.cond(q.params["A"]) <= 10


def test_random_diffeomorphism_is_deterministic():
    a, b = random_diffeomorphism(3, seed=11), random_diffeomorphism(3, seed=11)
    y = np.array([0.1, -0.2, 0.05])
    assert np.array_equal(a(y), b(y))


def test_random_diffeomorphism_invariants(rng):
    q = random_diffeomorphism(4, seed=2)
    for _ in range(30):
        y = rng.standard_normal(4)
        y *= q.radius * rng.random() / np.linalg.norm(y)
        x = q(y)
        assert np.max(np.abs(q(q.inverse(x)) - x)) <= 1e-10
        assert abs(np.linalg.det(q.derivative(y))) > 1e-6


def test_generation_failure():
    with pytest.raises(GenerationFailed):
        random_diffeomorphism(3, seed=0, magnitude=10.0)


def test_hand_chain_rule():
    f = parse_expr("x1^2", 1)
    q = Diffeomorphism.linear([[2.0]])
    P = NLPInstance(1, f)
    T = transform_problem(P, q, radius=0.4)
    assert autodiff.gradient(T.objective, [1.0])[0] == 8.0


def test_curvature_term():
    C = np.zeros((2, 2, 2))
    C[0, 0, 0] = 1.0
    q = Diffeomorphism.quadratic(np.eye(2), C, 0.1)
    f = parse_expr("x1", 2)
    T = transform_problem(NLPInstance(2, f), q)
    np.testing.assert_allclose(autodiff.hessian(T.objective, [0.2, -0.1]), np.diag([0.2, 0.0]), atol=1e-15)


def test_identity_transform(worked, rng):
    q = Diffeomorphism.identity(3)
    T = transform_problem(worked, q)
    for _ in range(10):
        y = rng.uniform(-0.3, 0.3, 3)
        for a, b in zip([worked.objective, *worked.inequalities], [T.objective, *T.inequalities]):
            assert autodiff.value(a, y) == autodiff.value(b, y)
    rep = verify_multiplier_invariance(worked, q, None, [0.0, 0.0])
    assert rep.source_residual == rep.transformed_residual
    so = verify_second_order_invariance(worked, q, None, [2.0, 0.0])
    assert so.max_general_deviation <= 1e-15


def test_transformed_constraints_stay_active(worked):
    T = transform_problem(worked, random_diffeomorphism(3, seed=5))
    assert T.is_active()


def test_composition_matches_pointwise(worked, rng):
    q = random_diffeomorphism(3, seed=1)
    T = transform_problem(worked, q)
    for _ in range(20):
        y = rng.uniform(-0.2, 0.2, 3)
        assert abs(autodiff.value(T.objective, y) - autodiff.value(worked.objective, q(y))) <= 1e-12


def test_radius_error(worked):
    q = Diffeomorphism.linear(10 * np.eye(3), radius=1.0)
    with pytest.raises(RadiusError):
        transform_problem(worked, q, radius=1.0)


def test_chain_rules_on_worked(worked, rng):
    q = random_diffeomorphism(3, seed=3)
    rep = verify_chain_rules(worked, q, rng.uniform(-0.1, 0.1, (5, 3)))
    assert rep.passed()
    linear = random_diffeomorphism(3, seed=3, magnitude=0.0)
    rep = verify_chain_rules(worked, linear, rng.uniform(-0.1, 0.1, (3, 3)))
    assert abs(rep.non_hess - rep.lin_hess) <= 1e-12


def test_multiplier_invariance(worked):
    for s in range(10):
        q = random_diffeomorphism(3, seed=s)
        good = verify_multiplier_invariance(worked, q, None, [2.0, 0.0])
        assert good.source_residual <= 1e-8 and good.transformed_residual <= 1e-8
        bad = verify_multiplier_invariance(worked, q, None, [0.0, 0.0])
        assert bad.source_residual == 2.0 and bad.transformed_residual > 0.1
        assert bad.equivalent


def test_second_order_precondition(worked):
    with pytest.raises(PreconditionFailed):
        verify_second_order_invariance(worked, random_diffeomorphism(3, seed=0), None, [0.0, 0.0])


def test_kernel_dimension_and_mfcq_invariance(worked):
    for s in range(5):
        q = random_diffeomorphism(3, seed=s)
        T = transform_problem(worked, q)
        assert tangent_kernel_basis(worked).shape[1] == tangent_kernel_basis(T).shape[1]
        assert check_mfcq(worked).satisfied == check_mfcq(T).satisfied


def test_first_order_biconditional(rng):
    # grad f(0) = (-1, -1, 1) = -(grad a + grad b), so mu = (1, 1) solves first order
    P = NLPInstance.from_text(
        "vars x1 x2 x3\nradius 1\nobjective x1^2 - x1 - x2 + x3 + x3^2\nineq a: x1 + x2^2\nineq b: x2 - x3 + x1*x3\n"
    )
    outcomes = set()
    for i in range(20):
        mu = np.array([1.0, 1.0]) if i % 2 else rng.uniform(0, 2, 2)
        q = random_diffeomorphism(3, seed=100 + i)
        src = kkt_residual(P, None, None, mu)
        dst = kkt_residual(transform_problem(P, q), None, None, mu)
        assert (src <= 1e-8) == (dst <= 1e-6 * np.linalg.cond(q.D0))
        outcomes.add(src <= 1e-8)
    assert outcomes == {True, False}


def test_from_exprs_matches_closed_form():
    names = ["y1", "y2"]
    q = Diffeomorphism.from_exprs([parse_expr("y1 + y2^2", names=names), parse_expr("y2", names=names)], radius=0.5)
    x = np.array([0.2, -0.1])
    np.testing.assert_allclose(q.inverse(x), [0.2 - 0.01, -0.1], atol=1e-12)
    np.testing.assert_allclose(q.derivative([0.0, 0.3]), [[1.0, 0.6], [0.0, 1.0]], atol=1e-15)
