import numpy as np
import pytest

from nlpcanon.errors import HypothesisViolated, NotProportional
from nlpcanon.expr import parse_expr
from nlpcanon.rank_one import (
    directional_derivative_matrix,
    directional_rank_check,
    factor_hessian_family,
    factor_rank_one_family,
    jacobian_rank_field,
)


def random_family(rng, n, m):
    H = rng.standard_normal((n, n))
    H = H + H.T
    alphas = rng.standard_normal(m)
    return alphas, H, [a * H for a in alphas]


def test_constructed_families(rng):
    for _ in range(50):
        alphas, H, Hs = random_family(rng, 3, 4)
        fam = factor_rank_one_family(Hs)
        assert fam.residual <= 1e-10
        j0 = fam.anchor
        np.testing.assert_allclose(fam.alphas, alphas / alphas[j0], rtol=1e-10, atol=1e-12)
        for a, Hj in zip(fam.alphas, Hs):
            np.testing.assert_allclose(a * fam.H, Hj, atol=1e-10)


def test_not_proportional_counterexample():
    with pytest.raises(NotProportional) as info:
        factor_rank_one_family([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    v = info.value.direction
    assert directional_rank_check([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])], v) == 2


def test_zero_family():
    fam = factor_rank_one_family([np.zeros((2, 2))] * 3)
    assert fam.is_zero_family
    np.testing.assert_array_equal(fam.alphas, 0)


def test_orthogonal_invariance(rng):
    alphas, H, Hs = random_family(rng, 3, 3)
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    a = factor_rank_one_family(Hs).alphas
    b = factor_rank_one_family([Q.T @ Hj @ Q for Hj in Hs]).alphas
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_cubic_family_directional_rank(rng):
    names = ["w1", "w2"]
    cs = [parse_expr(t, names=names) for t in ("w1*w2 + w1^3", "2*w1*w2 + 2*w1^3", "-w1*w2 - w1^3")]
    fam = factor_hessian_family(cs, 2)
    np.testing.assert_allclose(fam.alphas, [1, 2, -1], atol=1e-12)
    for _ in range(100):
        assert directional_rank_check(fam.alphas[:, None, None] * fam.H, rng.standard_normal(2)) <= 1


def test_factor_hessian_family_worked():
    cs = [parse_expr(t, names=["w1", "w2"]) for t in ("w1^2 + w2^2", "2*w1^2 + 2*w2^2")]
    fam = factor_hessian_family(cs, 2)
    np.testing.assert_allclose(fam.alphas, [1, 2], atol=1e-8)
    np.testing.assert_allclose(fam.H, 2 * np.eye(2), atol=1e-8)


def test_factor_hessian_family_rank_violation():
    cs = [parse_expr(t, names=["w1", "w2"]) for t in ("w1^2", "w2^2")]
    with pytest.raises(HypothesisViolated):
        factor_hessian_family(cs, 2)
    with pytest.raises(HypothesisViolated):
        factor_hessian_family([parse_expr("w1", names=["w1", "w2"])], 2)


def test_jacobian_rank_field():
    cs = [parse_expr(t, 2) for t in ("x1^2", "x2^2")]
    rank, where = jacobian_rank_field(cs, 2)
    assert rank == 2 and np.all(where != 0)


def test_directional_derivative_matrix():
    # h(x) = Dc(x) for c = (x1*x2, x1^2): h(x) = [[x2, x1], [2 x1, 0]] is linear
    h = lambda x: np.array([[x[1], x[0]], [2 * x[0], 0.0]])
    v = np.array([1.0, 2.0])
    np.testing.assert_allclose(directional_derivative_matrix(h, v), h(v), atol=1e-9)
    g = lambda x: np.array([[np.sin(x[0]) + x[1] ** 2]])
    np.testing.assert_allclose(directional_derivative_matrix(g, np.array([1.0, 0.0])), [[1.0]], atol=1e-9)
