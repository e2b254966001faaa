import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlpcanon import autodiff
from nlpcanon.autodiff import Jet, seed
from nlpcanon.errors import NonFiniteError
from nlpcanon.expr import parse_expr

CORPUS = [
    "x1^2 + 2*x2",
    "x1*x2*x3",
    "sin(x1) * exp(x2) - x3^3",
    "log(2 + x1^2) / (3 + x2)",
    "sqrt(4 + x1*x2) + cos(x3)",
    "(x1 - x2)^4 + x3/(1 + x1^2)",
]


def analytic_rosenbrock(x):
    a, b = x
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    H = np.array([[2 - 400 * (b - a * a) + 800 * a * a, -400 * a], [-400 * a, 200]])
    return g, H


def test_rosenbrock_against_hand_derivatives():
    f = parse_expr("(1 - x1)^2 + 100*(x2 - x1^2)^2", 2)
    for x in ([0.3, -0.2], [1.0, 1.0], [-1.2, 1.0]):
        g, H = analytic_rosenbrock(x)
        d = autodiff.derivatives(f, x)
        np.testing.assert_allclose(d.gradient, g, rtol=1e-13, atol=1e-12)
        np.testing.assert_allclose(d.hessian, H, rtol=1e-13, atol=1e-12)
        assert d.asymmetry == 0.0


@pytest.mark.parametrize("text", CORPUS)
def test_ad_matches_finite_differences(text, rng):
    f = parse_expr(text, 3)
    for _ in range(50):
        x = rng.uniform(-0.9, 0.9, 3)
        d = autodiff.derivatives(f, x)
        g_fd = autodiff.fd_gradient(f, x, 1e-5, richardson=True)
        H_fd = autodiff.fd_hessian(f, x, 1e-3, richardson=True)
        assert np.max(np.abs(d.gradient - g_fd)) <= 1e-6 * (1 + np.max(np.abs(d.gradient)))
        assert np.max(np.abs(d.hessian - H_fd)) <= 1e-4 * (1 + np.max(np.abs(d.hessian)))


def test_first_order_jets_have_no_hessian():
    x = seed([1.0, 2.0], order=1)
    y = x[0] * x[1] + x[0].sin()
    assert y.hess is None
    np.testing.assert_allclose(y.grad, [2.0 + np.cos(1.0), 1.0])


def test_numpy_scalars_defer_to_jets():
    x = seed([3.0])[0]
    y = np.float64(2.0) * x + np.float64(1.0)
    assert isinstance(y, Jet)
    assert y.val == 7.0


def test_sqrt_at_zero_is_not_differentiable():
    with pytest.raises(NonFiniteError):
        seed([0.0])[0].sqrt()


def test_jacobian_of_empty_list():
    assert autodiff.jacobian([], np.zeros(3)).shape == (0, 3)


def test_vector_derivatives():
    fn = lambda x: [x[0] * x[1], x[0] ** 2]
    vals, J, H = autodiff.vector_derivatives(fn, [2.0, 3.0])
    np.testing.assert_allclose(vals, [6.0, 4.0])
    np.testing.assert_allclose(J, [[3.0, 2.0], [4.0, 0.0]])
    np.testing.assert_allclose(H[0], [[0, 1], [1, 0]])
    np.testing.assert_allclose(H[1], [[2, 0], [0, 0]])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2), st.integers(0, 5))
def test_power_rule(x, k):
    f = lambda v: (v[0] + 2 * v[1]) ** k
    d = autodiff.derivatives(f, x)
    s = x[0] + 2 * x[1]
    c = np.array([1.0, 2.0])
    g = k * s ** (k - 1) * c if k >= 1 else np.zeros(2)
    H = k * (k - 1) * s ** (k - 2) * np.outer(c, c) if k >= 2 else np.zeros((2, 2))
    np.testing.assert_allclose(d.gradient, g, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(d.hessian, H, rtol=1e-12, atol=1e-12)


def test_fd_check_step_range():
    with pytest.raises(ValueError):
        autodiff.fd_check(lambda x: x[0], [0.0], step=1.0)
