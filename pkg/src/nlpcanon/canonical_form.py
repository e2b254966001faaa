"""Numerical canonical charts for active-constraint problems.

Given ``h`` with full-rank Jacobian at 0 and inequalities ``g``, pick
inequalities ``g_pi(1..r)`` whose gradients complete ``Dh(0)`` to the rank of
the full stack, add an orthonormal complement ``W`` and invert

    Phi(x) = (h(x), g_pi(1..r)(x), W' x) = (y, z, w)

by Newton. In the coordinates ``(y, z, w)`` the equalities read ``y``, the
selected inequalities read ``z`` and the remaining constraints ``c`` satisfy
``c(0) = 0``. When the rank of the full stack is that of the selected stack,
``D_w c(0) = 0`` as well.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import autodiff
from .autodiff import Jet
from .change_of_vars import Composed, Diffeomorphism, _ball_points, implicit_jets, newton_solve
from .errors import NewtonDivergence, RankDeficientEqualities, RankError
from .linalg import DEFAULT_TOL, nullspace_basis, numeric_rank
from .problem import NLPInstance

FD_STEP = 1e-4
RADIUS_SAMPLES = 50


def select_rank_completing_inequalities(P: NLPInstance, tol: float = DEFAULT_TOL):
    """Greedy selection of inequality gradients that extend ``Dh(0)``.

    Returns ``(perm, r)`` with 0-based ``perm`` listing the ``r`` selected
    inequalities first, the others after in their original order.
    """
    x0 = np.zeros(P.n)
    Dh = autodiff.jacobian(P.equalities, x0)
    if numeric_rank(Dh, tol) < P.m:
        raise RankDeficientEqualities(f"Dh(0) has rank {numeric_rank(Dh, tol)} < m = {P.m}")
    Dg = autodiff.jacobian(P.inequalities, x0)
    stack, rank, chosen = Dh, P.m, []
    for l in range(P.n_ineq):
        trial = np.vstack([stack, Dg[l : l + 1]])
        if numeric_rank(trial, tol) > rank:
            stack, rank = trial, rank + 1
            chosen.append(l)
    rest = [l for l in range(P.n_ineq) if l not in chosen]
    return tuple(chosen + rest), len(chosen)


class ChartMap:
    """``Phi(x) = (h(x), g_sel(x), W' x)``, evaluable on floats and jets."""

    def __init__(self, P: NLPInstance, selected, W):
        self.fns = list(P.equalities) + [P.inequalities[l] for l in selected]
        self.W = W

    def __call__(self, x):
        out = [fn(x) for fn in self.fns]
        for col in self.W.T:
            acc = 0.0
            for a, xi in zip(col, x):
                if a != 0.0:
                    acc = acc + float(a) * xi
            out.append(acc)
        return out


class NewtonInverse:
    """``u -> Phi^-1(u)`` by Newton; jets pass through by implicit differentiation."""

    def __init__(self, phi: ChartMap, D0: np.ndarray, limit: float):
        self.phi = phi
        self.D0 = D0
        self.limit = limit

    def solve(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return newton_solve(self.phi, u, np.linalg.solve(self.D0, u), radius=self.limit)

    def __call__(self, u):
        jets = [v for v in u if isinstance(v, Jet)]
        if not jets:
            return list(self.solve(u))
        like = jets[0]
        u = [v if isinstance(v, Jet) else Jet.constant(v, like) for v in u]
        x = self.solve([v.val for v in u])
        return implicit_jets(self.phi, x, u)


@dataclass
class CanonicalChart:
    """Chart ``x = q(y, z, w)`` putting ``P`` into canonical form.

    Chart coordinates are ordered ``(y_1..y_m, z_1..z_r, w_1..w_k)``;
    ``perm`` is 0-based into ``P.inequalities``.
    """

    source: NLPInstance
    perm: tuple
    r: int
    W: np.ndarray
    phi: ChartMap
    q: Diffeomorphism
    radius: float
    tol: float
    h_hat: tuple = ()
    g_hat: tuple = ()
    c: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.source.m

    @property
    def k(self) -> int:
        return self.W.shape[1]

    @property
    def p(self) -> int:
        return self.source.n_ineq - self.r

    @property
    def n(self) -> int:
        return self.source.n

    def split(self, u):
        u = np.asarray(u, dtype=float)
        return u[: self.m], u[self.m : self.m + self.r], u[self.m + self.r :]

    def chart_point(self, y=None, z=None, w=None) -> np.ndarray:
        y = np.zeros(self.m) if y is None else np.asarray(y, dtype=float)
        z = np.zeros(self.r) if z is None else np.asarray(z, dtype=float)
        w = np.zeros(self.k) if w is None else np.asarray(w, dtype=float)
        return np.concatenate([y, z, w])

    @property
    def residual_names(self) -> tuple:
        return tuple(self.source.ineq_names[l] for l in self.perm[self.r :])


def _validity_radius(inv: NewtonInverse, n: int, start: float, P: NLPInstance, seed: int, samples: int):
    rho = start
    rng = np.random.default_rng(seed)
    for _ in range(40):
        U = rng.standard_normal((samples, n))
        U *= rho / np.linalg.norm(U, axis=1, keepdims=True)
        try:
            if all(np.linalg.norm(inv.solve(u)) <= P.radius for u in U):
                return rho
        except (NewtonDivergence, ArithmeticError, ValueError):
            pass
        rho /= 2.0
    raise NewtonDivergence("no radius found on which the chart inverse converges")


def build_canonical_chart(P: NLPInstance, tol: float = DEFAULT_TOL, seed: int = 0) -> CanonicalChart:
    """Construct the canonical chart of ``P`` at the origin."""
    perm, r = select_rank_completing_inequalities(P, tol)
    x0 = np.zeros(P.n)
    selected = perm[:r]
    G = autodiff.jacobian(list(P.equalities) + [P.inequalities[l] for l in selected], x0)
    if numeric_rank(G, tol) != P.m + r:
        raise RankError("selected gradient stack is not of full row rank")
    W = nullspace_basis(G, tol) if G.shape[0] else np.eye(P.n)
    phi = ChartMap(P, selected, W)
    D0 = np.vstack([G, W.T]) if G.shape[0] else W.T.copy()
    if numeric_rank(D0, tol) != P.n:
        raise RankError("chart Jacobian at 0 is singular")
    inv = NewtonInverse(phi, D0, limit=10.0 * P.radius)
    radius = _validity_radius(inv, P.n, P.radius, P, seed, RADIUS_SAMPLES)
    q = Diffeomorphism(inv, P.n, radius, inverse_map=lambda x: np.array(phi(np.asarray(x, dtype=float))), name="chart")
    chart = CanonicalChart(
        source=P,
        perm=perm,
        r=r,
        W=W,
        phi=phi,
        q=q,
        radius=radius,
        tol=tol,
        h_hat=tuple(Composed(h, q) for h in P.equalities),
        g_hat=tuple(Composed(P.inequalities[l], q) for l in selected),
        c=tuple(Composed(P.inequalities[l], q) for l in perm[r:]),
        meta={"rank_full_stack": numeric_rank(autodiff.jacobian([*P.equalities, *P.inequalities], x0), tol)},
    )
    return chart


@dataclass
class ChartResiduals:
    h_residual: float  # max |h^(y,z,w) - y|
    g_residual: float  # max |g^(y,z,w) - z|
    dwc_ad: float  # ||D_w c(0)||_inf, exact
    dwc_fd: float  # same by central differences
    block_rank_mismatches: int  # samples where rank(Dhgc) - (m + r) != rank(D_w c)
    evaluated: int
    excluded: int

    def passed(self, chart_tol: float = 1e-9, dwc_tol: float = 1e-6) -> bool:
        return (
            self.h_residual <= chart_tol
            and self.g_residual <= chart_tol
            and max(self.dwc_ad, self.dwc_fd) <= dwc_tol
        )

    def as_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["passed"] = self.passed()
        return d


def dwc_at_origin(chart: CanonicalChart, fd: bool = False) -> np.ndarray:
    """``D_w c(0)`` as a ``p x k`` matrix, exactly or by central differences."""
    if chart.p == 0 or chart.k == 0:
        return np.zeros((chart.p, chart.k))
    cw = [_on_w(c, chart) for c in chart.c]
    w0 = np.zeros(chart.k)
    if fd:
        return np.array([autodiff.fd_gradient(f, w0, 1e-5, True) for f in cw])
    return autodiff.jacobian(cw, w0)


def canonical_residuals(chart: CanonicalChart, samples: int = 100, seed: int = 0, points=None) -> ChartResiduals:
    """Sampled deviations of the chart identities ``h^ = y``, ``g^ = z``.

    Points outside the validity radius, or where Newton fails, are excluded
    and counted. The block-rank identity ``rank Dhgc - (m + r) = rank D_w c``
    is checked at every evaluated point.
    """
    pts = _ball_points(chart.n, chart.radius, samples, seed) if points is None else np.atleast_2d(points)
    hr = gr = 0.0
    mism = excluded = evaluated = 0
    all_fns = [*chart.h_hat, *chart.g_hat, *chart.c]
    for u in pts:
        if np.linalg.norm(u) > chart.radius * (1 + 1e-12):
            excluded += 1
            continue
        try:
            x = chart.q(u)
        except NewtonDivergence:
            excluded += 1
            continue
        y, z, w = chart.split(u)
        if chart.m:
            hr = max(hr, float(np.max(np.abs(np.array([autodiff.value(h, x) for h in chart.source.equalities]) - y))))
        if chart.r:
            gv = np.array([autodiff.value(chart.source.inequalities[l], x) for l in chart.perm[: chart.r]])
            gr = max(gr, float(np.max(np.abs(gv - z))))
        if all_fns:
            J = autodiff.jacobian(all_fns, u)
            Dwc = J[chart.m + chart.r :, chart.m + chart.r :]
            lhs = numeric_rank(J, chart.tol) - (chart.m + chart.r)
            rhs = numeric_rank(Dwc, chart.tol) if Dwc.size else 0
            mism += int(lhs != rhs)
        evaluated += 1
    ad = dwc_at_origin(chart)
    fdv = dwc_at_origin(chart, fd=True)
    return ChartResiduals(
        hr,
        gr,
        float(np.max(np.abs(ad), initial=0.0)),
        float(np.max(np.abs(fdv), initial=0.0)),
        mism,
        evaluated,
        excluded,
    )


class _OnW:
    """``fn(0, 0, w)`` for a function of chart coordinates."""

    def __init__(self, fn: Callable, m_plus_r: int):
        self.fn = fn
        self.lead = m_plus_r

    def __call__(self, w):
        return self.fn([0.0] * self.lead + list(w))


def _on_w(fn, chart):
    return _OnW(fn, chart.m + chart.r)


@dataclass
class RestrictedProblem:
    """``f~(w) = f(q(0,0,w))`` and ``c~(w) = c(0,0,w)`` with Hessians at 0."""

    f_tilde: Callable
    c_tilde: tuple
    f_hessian: np.ndarray
    c_hessians: tuple
    f_hessian_fd: np.ndarray
    c_hessians_fd: tuple
    k: int

    @property
    def fd_discrepancy(self) -> float:
        pairs = [(self.f_hessian, self.f_hessian_fd), *zip(self.c_hessians, self.c_hessians_fd)]
        return max((float(np.max(np.abs(a - b), initial=0.0)) for a, b in pairs), default=0.0)


def restrict_to_w(chart: CanonicalChart, objective: Optional[Callable] = None) -> RestrictedProblem:
    """Restrict the objective and residual constraints to the ``w`` block.

    Hessians at ``w = 0`` are exact (jets through the Newton inverse); a
    central-difference Hessian (step 1e-4, one Richardson step) is kept
    alongside as a cross-check.
    """
    f = objective if objective is not None else chart.source.objective
    f_t = _on_w(Composed(f, chart.q), chart)
    c_t = tuple(_on_w(c, chart) for c in chart.c)
    w0 = np.zeros(chart.k)
    if chart.k == 0:
        empty = np.zeros((0, 0))
        return RestrictedProblem(f_t, c_t, empty, tuple(empty for _ in c_t), empty, tuple(empty for _ in c_t), 0)
    return RestrictedProblem(
        f_t,
        c_t,
        autodiff.hessian(f_t, w0),
        tuple(autodiff.hessian(c, w0) for c in c_t),
        autodiff.fd_hessian(f_t, w0, FD_STEP, True),
        tuple(autodiff.fd_hessian(c, w0, FD_STEP, True) for c in c_t),
        chart.k,
    )
