"""Constraint qualifications and second-order certificates at a degenerate point.

The main entry point is :func:`andreani_certificate`. Under MFCQ and the
rank-deviation hypothesis (the constraint Jacobian gains at most one rank
near the origin) it produces one multiplier pair ``(lam, mu)`` whose
Lagrangian Hessian is positive semidefinite on the whole tangent kernel:

1. build the canonical chart and restrict ``f`` and the residual
   constraints ``c`` to the ``w`` block,
2. factor the Hessians of ``c~`` at 0 as ``alpha_l H``,
3. bound ``gamma = sum alpha_l mu_{r+l}`` over the first-order multiplier
   polytope by two LPs,
4. find ``gamma*`` in that interval with ``f~''(0) + gamma* H`` PSD,
5. recover multipliers realizing ``gamma*`` by one more LP.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff
from .canonical_form import CanonicalChart, build_canonical_chart, restrict_to_w
from .errors import (
    HypothesisViolated,
    MultiplierRecoveryFailed,
    NewtonDivergence,
    SeparationFailed,
)
from .linalg import DEFAULT_TOL, lambda_min, numeric_rank, simplex_solve_small
from .problem import (
    NLPInstance,
    combined_jacobian,
    kkt_residual,
    lagrangian_gradient,
    lagrangian_hessian,
    second_order_term,
    tangent_kernel_basis,
)
from .quadratic_forms import semidefinite_separation
from .rank_one import factor_hessian_family, jacobian_rank_field

__all__ = [
    "MFCQReport",
    "RankDeviationReport",
    "MinimalityReport",
    "AndreaniCertificate",
    "WeakSecondOrderReport",
    "check_mfcq",
    "check_rank_deviation",
    "sample_local_minimality",
    "multiplier_interval",
    "recover_multipliers",
    "first_order_multipliers",
    "andreani_certificate",
    "verify_weak_second_order",
    "combined_jacobian",
    "kkt_residual",
    "lagrangian_gradient",
    "lagrangian_hessian",
    "second_order_term",
    "tangent_kernel_basis",
]

M_CAP = 1e6
MINIMALITY_SAMPLES = 5000
MINIMALITY_SLACK = 1e-9
KKT_TOL = 1e-8


# --------------------------------------------------------------------------
# MFCQ


@dataclass
class MFCQReport:
    satisfied: bool
    rank_Dh: int
    m: int
    witness: Optional[np.ndarray]  # ||d||_inf = 1 when satisfied
    margin: float  # -max_l grad g_l(0)' d
    equality_residual: float  # ||Dh(0) d||_inf

    def as_dict(self):
        return {
            "satisfied": self.satisfied,
            "rank_Dh": self.rank_Dh,
            "m": self.m,
            "witness": None if self.witness is None else self.witness.tolist(),
            "margin": self.margin,
            "equality_residual": self.equality_residual,
        }


def check_mfcq(P: NLPInstance, tol: float = DEFAULT_TOL) -> MFCQReport:
    """Mangasarian-Fromovitz at the origin via one LP.

    Maximize ``delta`` over ``Dh(0) d = 0``, ``grad g_l(0)' d + delta <= 0``,
    ``-1 <= d_i <= 1`` and ``delta <= 1``. MFCQ holds iff ``Dh(0)`` has full
    row rank and the optimal ``delta`` exceeds ``tol``.
    """
    x0 = np.zeros(P.n)
    Dh = autodiff.jacobian(P.equalities, x0)
    Dg = autodiff.jacobian(P.inequalities, x0)
    rank = numeric_rank(Dh, tol) if P.m else 0
    c = np.zeros(P.n + 1)
    c[-1] = -1.0
    A_eq = np.hstack([Dh, np.zeros((P.m, 1))]) if P.m else None
    b_eq = np.zeros(P.m) if P.m else None
    A_le = np.hstack([Dg, np.ones((P.n_ineq, 1))]) if P.n_ineq else None
    b_le = np.zeros(P.n_ineq) if P.n_ineq else None
    bounds = [(-1.0, 1.0)] * P.n + [(None, 1.0)]
    res = simplex_solve_small(c, A_eq, b_eq, A_le, b_le, bounds)
    if res.status != "optimal":
        return MFCQReport(False, rank, P.m, None, float("nan"), float("nan"))
    d = res.x[:-1].copy()
    scale = np.max(np.abs(d), initial=0.0)
    if scale > 0:
        d /= scale
    margin = float(-np.max(Dg @ d)) if P.n_ineq else float(res.x[-1])
    eq_res = float(np.max(np.abs(Dh @ d), initial=0.0)) if P.m else 0.0
    satisfied = rank == P.m and float(res.x[-1]) > tol and margin > tol
    return MFCQReport(bool(satisfied), rank, P.m, d if scale > 0 else None, margin, eq_res)


# --------------------------------------------------------------------------
# rank deviation


@dataclass
class RankDeviationReport:
    holds: bool
    max_rank: int
    rank_at_origin: int
    witness: np.ndarray  # sample attaining max_rank
    samples: int

    def __iter__(self):  # unpacks as (holds, max_rank)
        yield self.holds
        yield self.max_rank

    def as_dict(self):
        return {
            "holds": self.holds,
            "max_rank": self.max_rank,
            "rank_at_origin": self.rank_at_origin,
            "witness": self.witness.tolist(),
            "samples": self.samples,
        }


def check_rank_deviation(P: NLPInstance, samples: int = 200, tol: float = DEFAULT_TOL, seed: int = 0):
    """Sampled evidence that ``rank Dhg(x) <= rank Dhg(0) + 1`` on the ball."""
    if samples < 200:
        raise ValueError("need at least 200 samples")
    fns = [*P.equalities, *P.inequalities]
    r0 = numeric_rank(combined_jacobian(P), tol) if fns else 0
    best, where = jacobian_rank_field(fns, P.n, P.radius, samples, tol, seed)
    return RankDeviationReport(best <= r0 + 1, int(best), int(r0), np.asarray(where, dtype=float), samples)


# --------------------------------------------------------------------------
# local minimality guard


@dataclass
class MinimalityReport:
    holds: bool
    checked: int  # feasible samples evaluated
    worst_decrease: float  # min of f(x) - f(0) over feasible samples
    witness: Optional[np.ndarray]  # x attaining worst_decrease

    def as_dict(self):
        return {
            "holds": self.holds,
            "checked": self.checked,
            "worst_decrease": self.worst_decrease,
            "witness": None if self.witness is None else self.witness.tolist(),
        }


def sample_local_minimality(
    chart: CanonicalChart, samples: int = MINIMALITY_SAMPLES, seed: int = 0, slack: float = MINIMALITY_SLACK
) -> MinimalityReport:
    """Sample feasible points through the chart and compare ``f`` with ``f(0)``.

    Chart points have ``y = 0`` (equalities hold exactly), ``z <= 0`` with
    each component exactly 0 a third of the time, and ``w`` free; points
    with some residual constraint positive are discarded. Radii are spread
    log-uniformly over three decades below the validity radius.
    """
    P = chart.source
    rng = np.random.default_rng(seed)
    f0 = autodiff.value(P.objective, np.zeros(P.n))
    residual = [P.inequalities[l] for l in chart.perm[chart.r :]]
    worst, witness, checked = np.inf, None, 0
    for _ in range(samples):
        u = rng.standard_normal(P.n)
        u[: chart.m] = 0.0
        z = u[chart.m : chart.m + chart.r]
        z[:] = -np.abs(z) * (rng.random(chart.r) >= 1.0 / 3.0)
        nu = np.linalg.norm(u)
        if nu == 0.0:
            continue
        u *= chart.radius * 10.0 ** (-3.0 * rng.random()) / nu
        try:
            x = chart.q(u)
        except NewtonDivergence:
            continue
        if any(autodiff.value(c, x) > 0.0 for c in residual):
            continue
        checked += 1
        gap = autodiff.value(P.objective, x) - f0
        if gap < worst:
            worst, witness = gap, x
    holds = not worst < -slack
    return MinimalityReport(bool(holds), checked, float(worst) if checked else 0.0, witness)


# --------------------------------------------------------------------------
# multipliers


def _polytope(P: NLPInstance, cap: float):
    """Equality data and bounds of ``{(lam, mu) : KKT, mu >= 0, sum mu <= cap}``."""
    x0 = np.zeros(P.n)
    grad_f = autodiff.gradient(P.objective, x0)
    A_eq = combined_jacobian(P).T  # n x (m + n_ineq)
    bounds = [(None, None)] * P.m + [(0.0, None)] * P.n_ineq
    A_le = np.concatenate([np.zeros(P.m), np.ones(P.n_ineq)])[None, :] if P.n_ineq else None
    b_le = np.array([cap]) if P.n_ineq else None
    return A_eq, -grad_f, A_le, b_le, bounds


def _gamma_vector(P: NLPInstance, chart: CanonicalChart, alphas) -> np.ndarray:
    c = np.zeros(P.m + P.n_ineq)
    for a, l in zip(alphas, chart.perm[chart.r :]):
        c[P.m + l] = a
    return c


def multiplier_interval(P: NLPInstance, chart: CanonicalChart, alphas, cap: float = M_CAP):
    """``[min, max]`` of ``sum alpha_l mu_{r+l}`` over the multiplier polytope.

    Returns ``(interval, cap_binding)``. Raises :class:`HypothesisViolated`
    when no multipliers satisfy first order at 0.
    """
    A_eq, b_eq, A_le, b_le, bounds = _polytope(P, cap)
    cvec = _gamma_vector(P, chart, alphas)
    ends, binding = [], False
    for sign in (1.0, -1.0):
        res = simplex_solve_small(sign * cvec, A_eq, b_eq, A_le, b_le, bounds)
        if res.status == "infeasible":
            raise HypothesisViolated("no Lagrange multipliers satisfy first order at the origin")
        if res.status != "optimal":
            raise HypothesisViolated("multiplier polytope is unbounded despite the cap")
        ends.append(float(cvec @ res.x))
        if P.n_ineq and np.sum(res.x[P.m :]) >= cap * (1 - 1e-9):
            binding = True
    return (min(ends), max(ends)), binding


def recover_multipliers(P: NLPInstance, chart: CanonicalChart, alphas, gamma: float, cap: float = M_CAP):
    """Multipliers with ``sum alpha_l mu_{r+l} = gamma`` and smallest ``sum mu``."""
    A_eq, b_eq, A_le, b_le, bounds = _polytope(P, cap)
    cvec = _gamma_vector(P, chart, alphas)
    A_eq = np.vstack([A_eq, cvec[None, :]])
    b_eq = np.concatenate([b_eq, [gamma]])
    obj = np.concatenate([np.zeros(P.m), np.ones(P.n_ineq)])
    res = simplex_solve_small(obj, A_eq, b_eq, A_le, b_le, bounds)
    if res.status != "optimal":
        raise MultiplierRecoveryFailed(f"no multipliers realize gamma = {gamma:.12g} ({res.status})")
    lam = res.x[: P.m].copy()
    mu = np.maximum(res.x[P.m :], 0.0)
    return lam, mu


# --------------------------------------------------------------------------
# certificate


@dataclass
class AndreaniCertificate:
    """One multiplier pair satisfying the weak second-order condition.

    ``mu`` is in declared order; ``perm`` lists the rank-completing
    inequalities first, so ``alphas[l]`` belongs to ``mu[perm[r + l]]``.
    """

    lam: np.ndarray
    mu: np.ndarray
    gamma_star: float
    alphas: np.ndarray
    H: np.ndarray
    F: np.ndarray  # Hessian of the restricted objective at 0
    interval: tuple
    perm: tuple
    r: int
    lambda_min: float  # of F + gamma* H
    kkt_residual: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def gamma_from_mu(self) -> float:
        return float(sum(a * self.mu[l] for a, l in zip(self.alphas, self.perm[self.r :])))

    def as_dict(self, P: Optional[NLPInstance] = None):
        names = P.ineq_names if P is not None else tuple(f"g{l + 1}" for l in range(len(self.mu)))
        return {
            "lambda": self.lam.tolist(),
            "mu": self.mu.tolist(),
            "gamma_star": self.gamma_star,
            "alpha": self.alphas.tolist(),
            "H": self.H.tolist(),
            "restricted_objective_hessian": self.F.tolist(),
            "interval": list(self.interval),
            "permutation": [names[l] for l in self.perm],
            "r": self.r,
            "lambda_min": self.lambda_min,
            "kkt_residual": self.kkt_residual,
            "diagnostics": self.diagnostics,
        }


def _kernel_witness(chart: CanonicalChart, d_w) -> np.ndarray:
    """Lift a ``w`` direction to x-coordinates through ``Dq(0)``."""
    u = chart.chart_point(w=d_w)
    d = chart.q.derivative(np.zeros(chart.n)) @ u
    nd = np.max(np.abs(d), initial=0.0)
    return d / nd if nd > 0 else d


def andreani_certificate(
    P: NLPInstance,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    samples: int = 200,
    minimality_samples: int = MINIMALITY_SAMPLES,
    cap: float = M_CAP,
) -> AndreaniCertificate:
    """Compute ``(lam*, mu*, gamma*, alpha, H)`` for ``P`` at the origin.

    Raises :class:`HypothesisViolated` when MFCQ, the rank deviation bound,
    the rank-one factorization or sampled local minimality fails, and
    :class:`SeparationFailed` when no ``gamma`` in the multiplier interval
    makes the reduced form PSD. In the latter case the sampled minimality
    result is attached, since separation can only fail at non-minimizers.
    """
    mfcq = check_mfcq(P, tol)
    if not mfcq.satisfied:
        raise HypothesisViolated("MFCQ fails at the origin", witness=mfcq.witness, mfcq=mfcq.as_dict())
    dev = check_rank_deviation(P, max(samples, 200), tol, seed)
    if not dev.holds:
        raise HypothesisViolated(
            f"constraint Jacobian reaches rank {dev.max_rank} > {dev.rank_at_origin} + 1",
            witness=dev.witness,
            rank_deviation=dev.as_dict(),
        )
    chart = build_canonical_chart(P, tol, seed)
    R = restrict_to_w(chart)
    if chart.p and chart.k:
        fam = factor_hessian_family(R.c_tilde, chart.k, tol, chart.radius, max(samples, 100), seed)
        alphas, H = fam.alphas, fam.H
        if fam.is_zero_family:
            H = np.zeros((chart.k, chart.k))
    else:
        alphas, H = np.zeros(chart.p), np.zeros((chart.k, chart.k))
    F = R.f_hessian
    interval, binding = multiplier_interval(P, chart, alphas, cap)
    minimality = sample_local_minimality(chart, minimality_samples, seed)
    diagnostics = {
        "chart_radius": chart.radius,
        "cap": cap,
        "cap_binding": binding,
        "mfcq_margin": mfcq.margin,
        "max_rank": dev.max_rank,
        "rank_at_origin": dev.rank_at_origin,
        "minimality": minimality.as_dict(),
        "restricted_hessian_fd_discrepancy": R.fd_discrepancy,
        "tol": tol,
    }

    if chart.k == 0:
        gamma, lam_min = interval[0], float("inf")
    else:
        try:
            sep = semidefinite_separation(F, H, interval, tol)
        except HypothesisViolated as exc:
            gamma = exc.details["gamma"]
            d_w = np.asarray(exc.witness, dtype=float)
            ends = [float(d_w @ (F + g * H) @ d_w) for g in interval]
            lam, mu = recover_multipliers(P, chart, alphas, gamma, cap)
            raise SeparationFailed(
                f"no gamma in [{interval[0]:.6g}, {interval[1]:.6g}] makes the reduced form PSD "
                f"(best lambda_min {exc.details['lambda_min']:.3e})",
                witness=_kernel_witness(chart, d_w),
                reduced_witness=d_w,
                gamma=gamma,
                lambda_min=exc.details["lambda_min"],
                max_form_on_interval=max(ends),
                interval=interval,
                lam=lam,
                mu=mu,
                minimality=minimality.as_dict(),
            ) from exc
        gamma, lam_min = sep.gamma_star, sep.certificate_lambda_min
        diagnostics["regularized_gammas"] = list(sep.regularized_gammas)
        diagnostics["regularized_consistent"] = sep.regularized_consistent
    if not minimality.holds:
        raise HypothesisViolated(
            "sampled points beat f(0); the origin is not a local minimizer",
            witness=minimality.witness,
            minimality=minimality.as_dict(),
        )
    lam, mu = recover_multipliers(P, chart, alphas, gamma, cap)
    res = kkt_residual(P, None, lam, mu)
    cert = AndreaniCertificate(lam, mu, float(gamma), np.asarray(alphas, dtype=float), H, F, interval, chart.perm, chart.r, float(lam_min), res, diagnostics)
    if res > KKT_TOL or abs(cert.gamma_from_mu - gamma) > KKT_TOL:
        raise MultiplierRecoveryFailed(
            f"recovered multipliers leave KKT residual {res:.3e} and gamma gap {abs(cert.gamma_from_mu - gamma):.3e}"
        )
    return cert


# --------------------------------------------------------------------------
# verification


@dataclass
class WeakSecondOrderReport:
    passed: bool
    min_value: float  # smallest sampled S(d)
    witness: Optional[np.ndarray]
    kernel_lambda_min: float
    kernel_dim: int
    samples: int
    tol: float

    def as_dict(self):
        return {
            "passed": self.passed,
            "min_value": self.min_value,
            "witness": None if self.witness is None else self.witness.tolist(),
            "kernel_lambda_min": self.kernel_lambda_min,
            "kernel_dim": self.kernel_dim,
            "samples": self.samples,
            "tol": self.tol,
        }


def verify_weak_second_order(P: NLPInstance, cert, samples: int = 1000, tol: float = 1e-8, seed: int = 0):
    """Sample ``S(d)`` over the tangent kernel for the certificate's multipliers.

    ``cert`` is an :class:`AndreaniCertificate` or a :class:`SeparationFailed`
    (which carries the multipliers at the best gamma and a witness that is
    always evaluated).
    """
    if isinstance(cert, SeparationFailed):
        lam, mu = cert.details["lam"], cert.details["mu"]
        extra = [np.asarray(cert.witness, dtype=float)]
    else:
        lam, mu = cert.lam, cert.mu
        extra = []
    N = tangent_kernel_basis(P)
    L = lagrangian_hessian(P, None, lam, mu)
    k = N.shape[1]
    if k == 0:
        return WeakSecondOrderReport(True, 0.0, None, float("inf"), 0, 0, tol)
    rng = np.random.default_rng(seed)
    dirs = [N @ rng.standard_normal(k) for _ in range(samples)] + extra
    worst, witness, passed = np.inf, None, True
    for d in dirs:
        s = float(d @ L @ d)
        if s < worst:
            worst, witness = s, d
        if s < -tol * (1.0 + float(d @ d)):
            passed = False
    klam = lambda_min(N.T @ L @ N)
    return WeakSecondOrderReport(passed, float(worst), witness, klam, k, len(dirs), tol)


def first_order_multipliers(P: NLPInstance, cap: float = M_CAP):
    """Some ``(lam, mu)`` with zero KKT residual at 0, or ``None``.

    Picks the vertex of the multiplier polytope with the smallest ``sum mu``.
    """
    A_eq, b_eq, A_le, b_le, bounds = _polytope(P, cap)
    obj = np.concatenate([np.zeros(P.m), np.ones(P.n_ineq)])
    res = simplex_solve_small(obj, A_eq, b_eq, A_le, b_le, bounds)
    if res.status != "optimal":
        return None
    return res.x[: P.m].copy(), np.maximum(res.x[P.m :], 0.0)
