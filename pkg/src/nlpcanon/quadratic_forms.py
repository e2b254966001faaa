"""Pairs of quadratic forms: joint range, pointwise and uniform separation.

For symmetric ``A`` and ``B`` the joint range is the cone of points
``(x'Ax, x'Bx)``. Separation asks for one ``gamma`` in an interval with
``A + gamma B`` positive (semi)definite. Since ``gamma -> lambda_min(A + gamma B)``
is concave, separation is a one-dimensional concave maximization, solved
here by golden-section search with the interval endpoints always examined.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateError, HypothesisViolated
from .linalg import lambda_min, min_eigpair

FULL_PLANE = "FULL_PLANE"
SECTOR = "SECTOR"
RAY = "RAY"
ORIGIN_ONLY = "ORIGIN_ONLY"

GOLDEN_ITERATIONS = 200
ANGLE_TOL = 1e-6
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _check_pair(A, B):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise ValueError("A and B must be square matrices of the same size")
    for M in (A, B):
        if np.max(np.abs(M - M.T), initial=0.0) > 1e-12 * (1 + np.max(np.abs(M), initial=0.0)):
            raise ValueError("matrices must be symmetric")
    return 0.5 * (A + A.T), 0.5 * (B + B.T)


def sample_unit_vectors(n: int, samples: int, seed: int = 0) -> np.ndarray:
    """``samples`` unit vectors in R^n as rows (Gaussian directions)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((samples, n))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return X


def range_points(A, B, X) -> np.ndarray:
    """Rows ``(x'Ax, x'Bx)`` for the rows ``x`` of ``X``."""
    return np.column_stack([np.einsum("ij,jk,ik->i", X, A, X), np.einsum("ij,jk,ik->i", X, B, X)])


# --------------------------------------------------------------------------
# joint range


@dataclass(frozen=True)
class RangeClassification:
    """Joint range of two quadratic forms.

    For ``SECTOR`` and ``RAY`` the range is the set of points with polar
    angle in ``[theta1, theta2]`` and ``normal`` is a unit functional
    ``(c, d)`` with ``c u + d v > 0`` on the range minus the origin.
    """

    kind: str
    theta1: Optional[float] = None
    theta2: Optional[float] = None
    normal: Optional[tuple] = None
    samples: int = 0

    @property
    def width(self) -> Optional[float]:
        if self.theta1 is None:
            return None
        return self.theta2 - self.theta1

    def contains(self, points, angle_tol: float = ANGLE_TOL, zero_tol: float = 1e-12) -> np.ndarray:
        """Membership of the rows of ``points`` up to ``angle_tol``."""
        P = np.atleast_2d(points)
        r = np.hypot(P[:, 0], P[:, 1])
        if self.kind == FULL_PLANE:
            return np.ones(len(P), dtype=bool)
        if self.kind == ORIGIN_ONLY:
            return r <= zero_tol
        mid = 0.5 * (self.theta1 + self.theta2)
        half = 0.5 * self.width
        phi = np.arctan2(P[:, 1], P[:, 0])
        delta = np.abs((phi - mid + np.pi) % (2 * np.pi) - np.pi)
        return (r <= zero_tol) | (delta <= half + angle_tol)


def _half_plane_form(A, B, psi):
    # the functional (-sin psi, cos psi) is >= 0 exactly on angles [psi, psi + pi]
    return -math.sin(psi) * A + math.cos(psi) * B


def joint_range(A, B, samples: int = 10_000, seed: int = 0, tol: float = 1e-10) -> RangeClassification:
    """Classify the joint range of ``x'Ax`` and ``x'Bx``.

    Sampled range points give a first guess of the covering arc. The guess is
    then refined exactly: the range lies in the half-plane of angles
    ``[psi, psi + pi]`` iff ``-sin(psi) A + cos(psi) B`` is PSD, so the sector
    edges are found by bisection on the sign of its smallest eigenvalue.

    Raises :class:`DegenerateError` when all samples map to the origin or the
    pair has a common nonzero zero direction while the range is not the
    whole plane.
    """
    if samples < 1000:
        raise ValueError("joint_range needs at least 1000 samples")
    A, B = _check_pair(A, B)
    n = A.shape[0]
    scale = max(np.max(np.abs(A), initial=0.0), np.max(np.abs(B), initial=0.0))
    if scale == 0.0:
        raise DegenerateError("both forms vanish identically; the range is the origin")
    P = range_points(A, B, sample_unit_vectors(n, samples, seed))
    r = np.hypot(P[:, 0], P[:, 1])
    keep = r > 1e-12 * scale
    if not np.any(keep):
        raise DegenerateError("every sampled direction maps to the origin")
    phi = np.sort(np.arctan2(P[keep, 1], P[keep, 0]))
    gaps = np.diff(np.concatenate([phi, [phi[0] + 2 * np.pi]]))
    g = int(np.argmax(gaps))
    if gaps[g] < np.pi - ANGLE_TOL:
        # sampled points already positively span the plane; the range is convex
        return RangeClassification(FULL_PLANE, samples=samples)

    lo_s = phi[(g + 1) % len(phi)]  # first sampled angle after the gap
    hi_s = lo_s + (2 * np.pi - gaps[g])
    # feasible half-plane starts lie in [hi_s - pi, lo_s]
    a, b = hi_s - np.pi, lo_s
    grid = np.linspace(a, b, 65)
    vals = [lambda_min(_half_plane_form(A, B, psi)) for psi in grid]
    k = int(np.argmax(vals))
    psi0, best = grid[k], vals[k]
    # golden refinement of the best start (lambda_min is smooth enough here)
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    psi0, best = _golden_max(lambda p: lambda_min(_half_plane_form(A, B, p)), lo, hi, 80, (psi0, best))
    ftol = tol * scale
    if best < -ftol:
        return RangeClassification(FULL_PLANE, samples=samples)
    if best <= ftol:
        raise DegenerateError(
            "the forms have a common zero direction (the range is not contained in an open half-plane)"
        )

    def feasible(psi):
        return lambda_min(_half_plane_form(A, B, psi)) >= -ftol

    # largest feasible start theta1 in [psi0, lo_s], smallest in [a, psi0]
    t_lo, t_hi = psi0, b
    if feasible(t_hi):
        t_lo = t_hi
    for _ in range(100):
        if t_hi - t_lo <= 1e-15:
            break
        mid = 0.5 * (t_lo + t_hi)
        if feasible(mid):
            t_lo = mid
        else:
            t_hi = mid
    theta1 = t_lo
    s_lo, s_hi = a, psi0
    if feasible(s_lo):
        s_hi = s_lo
    for _ in range(100):
        if s_hi - s_lo <= 1e-15:
            break
        mid = 0.5 * (s_lo + s_hi)
        if feasible(mid):
            s_hi = mid
        else:
            s_lo = mid
    theta2 = s_hi + np.pi
    theta1 = min(theta1, lo_s)
    theta2 = max(theta2, hi_s)
    mid = 0.5 * (theta1 + theta2)
    normal = (math.cos(mid), math.sin(mid))
    kind = RAY if theta2 - theta1 <= ANGLE_TOL else SECTOR
    # normalize to the principal branch of the lower edge
    shift = 2 * np.pi * math.floor((theta1 + np.pi) / (2 * np.pi))
    return RangeClassification(kind, float(theta1 - shift), float(theta2 - shift), normal, samples)


# --------------------------------------------------------------------------
# separation


def check_pointwise_hypothesis(A, B, interval, samples: int = 10_000, seed: int = 0, tol: float = 1e-8):
    """Sampled check that every direction admits some gamma in the interval.

    Returns ``(holds, witness, worst_value)`` where ``witness`` is the unit
    vector with the smallest ``max_gamma x'(A + gamma B)x``. The maximum of
    the affine map ``gamma -> u + gamma v`` is attained at an endpoint.
    """
    a, b = float(interval[0]), float(interval[1])
    if a > b:
        raise ValueError("interval must satisfy a <= b")
    A, B = _check_pair(A, B)
    X = sample_unit_vectors(A.shape[0], samples, seed)
    P = range_points(A, B, X)
    best = np.maximum(P[:, 0] + a * P[:, 1], P[:, 0] + b * P[:, 1])
    i = int(np.argmin(best))
    return bool(best[i] >= -tol), X[i], float(best[i])


@dataclass(frozen=True)
class SeparationResult:
    gamma_star: float
    certificate_lambda_min: float
    mode: str  # "definite" or "semidefinite"
    interval: tuple = ()
    regularized_gammas: tuple = ()
    regularized_consistent: Optional[bool] = None
    diagnostics: dict = field(default_factory=dict)


def _golden_max(f, a, b, iterations, start=None):
    """Maximize a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``.

    Endpoints and the optional ``start`` candidate are always compared.
    """
    candidates = [(a, f(a)), (b, f(b))]
    if start is not None:
        candidates.append(start)
    lo, hi = a, b
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(iterations):
        if hi - lo <= 1e-15 * (1.0 + abs(lo) + abs(hi)):
            break
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INV_PHI * (hi - lo)
            fd = f(d)
    candidates += [(c, fc), (d, fd)]
    # first maximal candidate; endpoints win ties
    best = candidates[0]
    for cand in candidates[1:]:
        if cand[1] > best[1]:
            best = cand
    return float(best[0]), float(best[1])


def maximize_min_eigenvalue(A, B, interval, iterations: int = GOLDEN_ITERATIONS):
    """``argmax`` and ``max`` over the interval of ``lambda_min(A + gamma B)``."""
    A, B = _check_pair(A, B)
    a, b = float(interval[0]), float(interval[1])
    if a > b:
        raise ValueError("interval must satisfy a <= b")
    if a == b:
        return a, lambda_min(A + a * B)
    return _golden_max(lambda g: lambda_min(A + g * B), a, b, iterations)


def definite_separation(A, B, interval, iterations: int = GOLDEN_ITERATIONS) -> SeparationResult:
    """gamma in the interval with ``A + gamma B`` positive definite."""
    A, B = _check_pair(A, B)
    gamma, lam = maximize_min_eigenvalue(A, B, interval, iterations)
    if not lam > 0.0:
        _, vec = min_eigpair(A + gamma * B)
        raise HypothesisViolated(
            f"no gamma in [{interval[0]}, {interval[1]}] makes A + gamma B positive definite "
            f"(best lambda_min {lam:.3e} at gamma {gamma:.6g})",
            witness=vec,
            gamma=gamma,
            lambda_min=lam,
        )
    return SeparationResult(gamma, lam, "definite", (float(interval[0]), float(interval[1])))


REGULARIZATION_STEPS = (10, 100, 1000)


def semidefinite_separation(
    A, B, interval, tol: float = 1e-8, iterations: int = GOLDEN_ITERATIONS, cluster_tol: float = 1e-3
) -> SeparationResult:
    """gamma in the interval with ``A + gamma B`` positive semidefinite.

    The answer is cross-checked against the regularized construction: for
    ``k`` in 10, 100, 1000 the definite problem for ``A + I/k`` is solved and
    the resulting gammas must cluster (within ``cluster_tol``) around a point
    whose ``lambda_min`` is at least ``-tol``.
    """
    A, B = _check_pair(A, B)
    I = (float(interval[0]), float(interval[1]))
    gamma, lam = maximize_min_eigenvalue(A, B, I, iterations)
    if lam < -tol:
        _, vec = min_eigpair(A + gamma * B)
        raise HypothesisViolated(
            f"no gamma in [{I[0]}, {I[1]}] makes A + gamma B positive semidefinite "
            f"(best lambda_min {lam:.3e} at gamma {gamma:.6g})",
            witness=vec,
            gamma=gamma,
            lambda_min=lam,
        )

    n = A.shape[0]
    gammas = []
    for k in REGULARIZATION_STEPS:
        try:
            gammas.append(definite_separation(A + np.eye(n) / k, B, I, iterations).gamma_star)
        except HypothesisViolated:
            gammas.append(None)
    consistent = False
    if all(g is not None for g in gammas):
        tail = gammas[1:]
        for p in [gammas[-1], gamma, *gammas]:
            if all(abs(g - p) <= cluster_tol for g in tail) and lambda_min(A + p * B) >= -tol:
                consistent = True
                break
    return SeparationResult(
        gamma, lam, "semidefinite", I, tuple(gammas), consistent, {"tol": tol, "cluster_tol": cluster_tol}
    )
