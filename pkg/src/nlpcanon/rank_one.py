"""Rank-one coupled families of symmetric matrices.

When the constraint Jacobian ``Dc(x)`` vanishes at the origin and never has
rank above one nearby, the Hessians ``c_l''(0)`` are all multiples of one
symmetric matrix. This module detects that structure and factors it as
``H_l = alpha_l H``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff
from .errors import HypothesisViolated, NoConvergence, NotProportional
from .linalg import DEFAULT_TOL, numeric_rank


@dataclass(frozen=True)
class RankOneFactorization:
    alphas: np.ndarray
    H: np.ndarray
    residual: float
    anchor: int = -1  # index j0 with alpha[j0] == 1, -1 for the zero family

    @property
    def is_zero_family(self) -> bool:
        return self.anchor < 0


def directional_rank_check(Hs: Sequence, v, tol: float = DEFAULT_TOL) -> int:
    """Numeric rank of the n x m matrix with columns ``H_j v``."""
    v = np.asarray(v, dtype=float)
    if not np.linalg.norm(v) > 0:
        raise ValueError("direction must be nonzero")
    if len(Hs) == 0:
        return 0
    A_v = np.column_stack([np.asarray(H, dtype=float) @ v for H in Hs])
    return numeric_rank(A_v, tol)


def _violating_direction(Hs, tol, seed=0, tries=200):
    n = np.asarray(Hs[0]).shape[0]
    rng = np.random.default_rng(seed)
    candidates = list(np.eye(n)) + list(rng.standard_normal((tries, n)))
    for v in candidates:
        if directional_rank_check(Hs, v, tol) > 1:
            return v / np.linalg.norm(v)
    return None


def factor_rank_one_family(Hs: Sequence, tol: float = DEFAULT_TOL) -> RankOneFactorization:
    """Write each ``H_j`` as ``alpha_j H`` by Frobenius projection.

    ``H`` is the first member with Frobenius norm above ``tol`` (so its
    alpha is 1); ``alpha_j = <H_j, H> / <H, H>``. An all-zero family gives
    zero alphas and ``H = 0``.
    """
    Hs = [np.asarray(H, dtype=float) for H in Hs]
    if not Hs:
        return RankOneFactorization(np.zeros(0), np.zeros((0, 0)), 0.0)
    n = Hs[0].shape[0]
    for H in Hs:
        if H.shape != (n, n) or np.max(np.abs(H - H.T), initial=0.0) > 1e-10 * (1 + np.max(np.abs(H), initial=0.0)):
            raise ValueError("family members must be symmetric matrices of one size")
    norms = [np.linalg.norm(H) for H in Hs]
    j0 = next((j for j, s in enumerate(norms) if s > tol), None)
    if j0 is None:
        return RankOneFactorization(np.zeros(len(Hs)), np.zeros((n, n)), 0.0)
    H = Hs[j0]
    hh = float(np.sum(H * H))
    alphas = np.array([float(np.sum(Hj * H)) / hh for Hj in Hs])
    alphas[j0] = 1.0
    res = [np.linalg.norm(Hj - a * H) / (1.0 + s) for Hj, a, s in zip(Hs, alphas, norms)]
    worst = int(np.argmax(res))
    if res[worst] > tol:
        raise NotProportional(
            f"member {worst} is not a multiple of member {j0} (residual {res[worst]:.3e})",
            worst,
            float(res[worst]),
            _violating_direction(Hs, tol),
        )
    return RankOneFactorization(alphas, H.copy(), float(max(res)), j0)


def directional_derivative_matrix(
    h: Callable, v, step: float = 1e-2, tol: float = 1e-9, max_halvings: int = 30
) -> np.ndarray:
    """Limit of ``h(delta v) / delta`` as delta -> 0 (``h(0) = 0``).

    ``h`` maps an n-vector to an n x m matrix. The difference quotients at
    ``delta = step, step/2, ...`` are Richardson-extrapolated until two
    successive estimates agree to ``tol`` (relative).
    """
    v = np.asarray(v, dtype=float)
    h0 = np.asarray(h(np.zeros_like(v)), dtype=float)
    if np.max(np.abs(h0), initial=0.0) > 1e-10:
        raise HypothesisViolated("h(0) must vanish")
    if not np.any(v):
        return np.zeros_like(h0)
    table = []  # rows of the Richardson tableau
    delta = step
    prev = None
    for i in range(max_halvings):
        row = [np.asarray(h(delta * v), dtype=float) / delta]
        for j, prior in enumerate(table[-1] if table else []):
            factor = 2.0 ** (j + 1)
            row.append((factor * row[j] - prior) / (factor - 1.0))
        table.append(row)
        est = row[-1]
        if prev is not None:
            gap = np.max(np.abs(est - prev), initial=0.0)
            if gap <= tol * (1.0 + np.max(np.abs(est), initial=0.0)):
                return est
        prev = est
        delta /= 2.0
    raise NoConvergence("difference quotients did not settle")


def _ball_points(n, radius, samples, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((samples, n))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    X *= radius * rng.random((samples, 1)) ** (1.0 / max(n, 1))
    return X


def jacobian_rank_field(
    cs: Sequence[Callable], n: int, radius: float = 1.0, samples: int = 200, tol: float = DEFAULT_TOL, seed: int = 0
):
    """Largest sampled numeric rank of ``Dc(x)`` over the ball.

    Returns ``(max_rank, argmax_point)``. Points include the axes at the
    radius so simple coordinate structure is always exercised.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    if len(cs) == 0:
        return 0, np.zeros(n)
    pts = np.vstack([_ball_points(n, radius, samples, seed), radius * np.eye(n) / np.sqrt(2), radius * np.ones((1, n)) / np.sqrt(n) / 2])
    best, arg = -1, None
    for x in pts:
        r = numeric_rank(autodiff.jacobian(cs, x), tol)
        if r > best:
            best, arg = r, x
    return best, arg


def factor_hessian_family(
    cs: Sequence[Callable],
    n: int,
    tol: float = DEFAULT_TOL,
    radius: float = 1.0,
    samples: int = 200,
    seed: int = 0,
) -> RankOneFactorization:
    """Hessians at the origin of ``c_1..c_p`` factored as ``alpha_l H``.

    Requires ``Dc(0) = 0`` and sampled rank of ``Dc`` at most one on the ball
    of the given radius.
    """
    x0 = np.zeros(n)
    J0 = autodiff.jacobian(cs, x0)
    if np.max(np.abs(J0), initial=0.0) > tol:
        raise HypothesisViolated("Dc(0) does not vanish", witness=J0)
    rank, where = jacobian_rank_field(cs, n, radius, samples, tol, seed)
    if rank > 1:
        raise HypothesisViolated(f"Dc(x) has rank {rank} at a sampled point", witness=where, rank=rank)
    Hs = [autodiff.hessian(c, x0) for c in cs]
    return factor_rank_one_family(Hs, tol)
