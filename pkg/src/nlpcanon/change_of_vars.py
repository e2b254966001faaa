"""Local diffeomorphisms and the invariance of optimality conditions.

A :class:`Diffeomorphism` ``q`` acts on jets as well as floats, so
``f(q(y))`` can be differentiated exactly by forward mode. That gives two
independent routes to the derivatives of a transformed function: direct
differentiation of the composition, and the chain-rule formulas

    grad f^(y) = Dq(y)' grad f(q(y))
    hess f^(y) = Dq(y)' hess f(q(y)) Dq(y) + sum_k d_k f(q(y)) hess q_k(y)

The verification routines compare the two, and check that multipliers,
tangent kernels and second-order terms transform as expected.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import autodiff
from .autodiff import Jet
from .errors import GenerationFailed, NewtonDivergence, PreconditionFailed, RadiusError
from .problem import NLPInstance, kkt_residual, second_order_term, tangent_kernel_basis

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50


def _matvec(A, y):
    """``A @ y`` for a list of jets or floats."""
    out = []
    for row in A:
        acc = 0.0
        for a, yj in zip(row, y):
            if a != 0.0:
                acc = acc + float(a) * yj
        out.append(acc)
    return out


def newton_solve(
    fn: Callable,
    target: np.ndarray,
    x0: np.ndarray,
    tol: float = NEWTON_TOL,
    maxiter: int = NEWTON_MAXITER,
    radius: Optional[float] = None,
) -> np.ndarray:
    """Damped Newton for ``fn(x) = target`` with backtracking on the residual."""
    target = np.asarray(target, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    goal = tol * (1.0 + np.max(np.abs(target), initial=0.0))
    for _ in range(maxiter):
        vals, jac, _ = autodiff.vector_derivatives(fn, x, order=1)
        r = vals - target
        rn = np.max(np.abs(r), initial=0.0)
        if rn <= goal:
            return x
        try:
            step = np.linalg.solve(jac, r)
        except np.linalg.LinAlgError as exc:
            raise NewtonDivergence("singular Jacobian during Newton iteration") from exc
        t = 1.0
        for _ in range(40):
            trial = x - t * step
            try:
                tv = np.array([float(v) for v in _real(fn(trial))])
                if np.max(np.abs(tv - target), initial=0.0) < rn or t < 1e-10:
                    break
            except (ArithmeticError, ValueError):
                pass
            t *= 0.5
        x = trial
        if radius is not None and np.linalg.norm(x) > radius:
            raise NewtonDivergence(f"Newton iterate left the ball of radius {radius}")
        if not np.all(np.isfinite(x)):
            raise NewtonDivergence("Newton iterate is not finite")
    vals = np.array([float(v) for v in _real(fn(x))])
    if np.max(np.abs(vals - target), initial=0.0) <= goal:
        return x
    raise NewtonDivergence(f"Newton did not converge in {maxiter} iterations")


def _real(values):
    return [v.val if isinstance(v, Jet) else v for v in values]


def implicit_jets(fn: Callable, x: np.ndarray, s: Sequence[Jet]) -> list[Jet]:
    """Jets of ``x(s)`` defined by ``fn(x(s)) = s`` at a solved point ``x``.

    First order: ``x' = J^-1 s'``. Second order, from differentiating the
    identity twice: ``x''_i = (J^-1 (s'' - x'^T T x'))_i`` where ``T_j`` is
    the Hessian of ``fn_j``. Only second derivatives of ``fn`` are needed.
    """
    order = 2 if s[0].hess is not None else 1
    _, J, T = autodiff.vector_derivatives(fn, x, order=order)
    Sg = np.array([si.grad for si in s])  # (n, k)
    Xg = np.linalg.solve(J, Sg)
    if order == 1:
        return [Jet(x[i], Xg[i]) for i in range(len(x))]
    Sh = np.array([si.hess for si in s])  # (n, k, k)
    curv = np.einsum("pa,jpq,qb->jab", Xg, T, Xg)
    Xh = np.einsum("ij,jab->iab", np.linalg.inv(J), Sh - curv)
    Xh = 0.5 * (Xh + np.transpose(Xh, (0, 2, 1)))
    return [Jet(x[i], Xg[i], Xh[i]) for i in range(len(x))]


class Diffeomorphism:
    """A local change of variables ``x = q(y)`` near ``y = 0``.

    ``forward`` maps a sequence (floats or jets) to a list of the same
    kind. ``inverse_map``, when given, is an exact inverse; otherwise the
    inverse is computed by damped Newton started at ``Dq(0)^-1 x``.
    """

    def __init__(
        self,
        forward: Callable,
        n: int,
        radius: float = 1.0,
        inverse_map: Optional[Callable] = None,
        name: str = "custom",
        params: Optional[dict] = None,
    ):
        self.forward = forward
        self.n = n
        self.radius = float(radius)
        self.inverse_map = inverse_map
        self.name = name
        self.params = params or {}
        self._D0 = None

    # construction --------------------------------------------------------
    @classmethod
    def linear(cls, A, radius: float = 1.0) -> "Diffeomorphism":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        Ainv = np.linalg.inv(A)
        return cls(
            lambda y: _matvec(A, y),
            A.shape[0],
            radius,
            inverse_map=lambda x: Ainv @ np.asarray(x, dtype=float),
            name="linear",
            params={"A": A, "magnitude": 0.0},
        )

    @classmethod
    def quadratic(cls, A, C, magnitude: float = 1.0, radius: float = 1.0) -> "Diffeomorphism":
        """``q_k(y) = (A y)_k + magnitude * y' C_k y``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        C = np.asarray(C, dtype=float)
        n = A.shape[0]
        if C.shape != (n, n, n):
            raise ValueError("C must have shape (n, n, n)")
        C = 0.5 * (C + np.transpose(C, (0, 2, 1)))

        def forward(y):
            lin = _matvec(A, y)
            if magnitude == 0.0:
                return lin
            out = []
            for k in range(n):
                quad = 0.0
                for i in range(n):
                    row = _matvec(C[k][i : i + 1], y)[0]
                    if not (isinstance(row, float) and row == 0.0):
                        quad = quad + y[i] * row
                out.append(lin[k] + magnitude * quad)
            return out

        return cls(forward, n, radius, name="quadratic", params={"A": A, "C": C, "magnitude": float(magnitude)})

    @classmethod
    def from_exprs(cls, exprs: Sequence[Callable], radius: float = 1.0) -> "Diffeomorphism":
        exprs = list(exprs)
        return cls(lambda y: [e(y) for e in exprs], len(exprs), radius, name="expr")

    @classmethod
    def identity(cls, n: int, radius: float = 1.0) -> "Diffeomorphism":
        return cls(lambda y: list(y), n, radius, inverse_map=lambda x: np.asarray(x, dtype=float), name="identity")

    # evaluation ----------------------------------------------------------
    def apply(self, y):
        """Generic evaluation: jets in, jets out; floats in, floats out."""
        return self.forward(y)

    def __call__(self, y) -> np.ndarray:
        return np.array([float(v) for v in _real(self.forward(np.asarray(y, dtype=float)))])

    def derivative(self, y) -> np.ndarray:
        return autodiff.vector_derivatives(self.forward, y, order=1)[1]

    def component_hessians(self, y) -> np.ndarray:
        """Array ``(n, n, n)`` whose k-th slice is the Hessian of ``q_k``."""
        return autodiff.vector_derivatives(self.forward, y, order=2)[2]

    @property
    def D0(self) -> np.ndarray:
        if self._D0 is None:
            self._D0 = self.derivative(np.zeros(self.n))
        return self._D0

    def inverse(self, x, tol: float = NEWTON_TOL, maxiter: int = NEWTON_MAXITER) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.inverse_map is not None:
            return np.asarray(self.inverse_map(x), dtype=float)
        y0 = np.linalg.solve(self.D0, x)
        return newton_solve(self.forward, x, y0, tol, maxiter)

    def validate(self, samples: int = 50, seed: int = 0):
        """Sampled ``(max round-trip error, min |det Dq|)`` over the radius."""
        pts = _ball_points(self.n, self.radius, samples, seed)
        worst, mindet = 0.0, np.inf
        for y in pts:
            x = self(y)
            worst = max(worst, float(np.max(np.abs(self(self.inverse(x)) - x), initial=0.0)))
            mindet = min(mindet, abs(float(np.linalg.det(self.derivative(y)))))
        return worst, mindet


def _ball_points(n, radius, samples, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((samples, n))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    X *= radius * rng.random((samples, 1)) ** (1.0 / max(n, 1))
    return X


def random_diffeomorphism(
    n: int, seed: int = 0, magnitude: float = 0.1, radius: float = 0.5, det_min: float = 1e-6
) -> Diffeomorphism:
    """Seeded ``q(y) = A y + magnitude * (y' C_k y)_k`` with ``cond(A) <= 10``.

    ``A = U diag(s) V'`` with singular values in [1, 3]; each ``C_k`` has
    spectral norm 1. Invertibility on the ball is certified by
    ``2 * magnitude * radius * sqrt(n) <= sigma_min(A) / 2``, which keeps
    ``Dq`` within half of ``sigma_min(A)`` of ``A``; sampled determinant and
    Newton round trips are checked on top.
    """
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    s = rng.uniform(1.0, 3.0, size=n)
    A = U @ np.diag(s) @ V.T
    C = rng.standard_normal((n, n, n))
    C = 0.5 * (C + np.transpose(C, (0, 2, 1)))
    for k in range(n):
        C[k] /= max(np.linalg.norm(C[k], 2), 1e-12)
    bound = 2.0 * magnitude * radius * np.sqrt(n)
    if bound > 0.5 * s.min():
        raise GenerationFailed(
            f"magnitude {magnitude} too large for radius {radius}: perturbation bound {bound:.3g} "
            f"exceeds half the smallest singular value {s.min():.3g}"
        )
    q = Diffeomorphism.quadratic(A, C, magnitude, radius)
    q.name = "random"
    q.params["seed"] = seed
    err, mindet = q.validate(samples=20, seed=seed)
    if err > 1e-10 or mindet < det_min:
        raise GenerationFailed(f"sampled invertibility check failed (round trip {err:.2e}, |det| {mindet:.2e})")
    return q


# --------------------------------------------------------------------------
# transformed problems


class Composed:
    """``fn(q(y))`` evaluable on floats and jets."""

    def __init__(self, fn: Callable, q: Diffeomorphism):
        self.fn = fn
        self.q = q

    def __call__(self, y):
        return self.fn(self.q.apply(y))


@dataclass(frozen=True)
class TransformedProblem(NLPInstance):
    source: Optional[NLPInstance] = None
    q: Optional[Diffeomorphism] = None


def transform_problem(P: NLPInstance, q: Diffeomorphism, radius: Optional[float] = None, samples: int = 50, seed: int = 0):
    """The problem in the coordinates ``y`` with ``x = q(y)``.

    Without an explicit ``radius`` the transformed radius shrinks ``q``'s
    radius until sampled images stay inside ``P``'s ball. With an explicit
    radius, images leaving that ball raise :class:`RadiusError`.
    """
    if q.n != P.n:
        raise ValueError("dimension mismatch between problem and diffeomorphism")
    q0 = q(np.zeros(P.n))
    if np.max(np.abs(q0), initial=0.0) > 1e-12:
        raise PreconditionFailed("q(0) must be 0 so that the active point is preserved")
    if radius is None:
        pts = _ball_points(P.n, q.radius, samples, seed)
        lip = max(np.linalg.norm(q.derivative(y), 2) for y in pts)
        radius = min(q.radius, P.radius / (1.05 * lip))
    check = _ball_points(P.n, radius, samples, seed + 1)
    for y in check:
        if np.linalg.norm(q(y)) > P.radius:
            raise RadiusError(f"q maps {y.tolist()} outside the problem's ball of radius {P.radius}")
    return TransformedProblem(
        n=P.n,
        objective=Composed(P.objective, q),
        equalities=tuple(Composed(h, q) for h in P.equalities),
        inequalities=tuple(Composed(g, q) for g in P.inequalities),
        radius=float(radius),
        var_names=tuple(f"y{i + 1}" for i in range(P.n)),
        eq_names=P.eq_names,
        ineq_names=P.ineq_names,
        digest=P.digest,
        meta={"transform": q.name},
        source=P,
        q=q,
    )


# --------------------------------------------------------------------------
# verification


def _rel(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b), initial=0.0) / (1.0 + np.max(np.abs(b), initial=0.0)))


@dataclass
class ChainRuleReport:
    """Worst relative residuals of the four chain-rule identities.

    ``lin_*`` use the linearization ``A = Dq(0)``; ``non_*`` the full map.
    ``fd_*`` compare finite differences of the composition with the
    right-hand sides of the nonlinear identities.
    """

    lin_grad: float = 0.0
    lin_hess: float = 0.0
    non_grad: float = 0.0
    non_hess: float = 0.0
    fd_grad: float = 0.0
    fd_hess: float = 0.0
    points: int = 0

    def passed(self, ad_tol: float = 1e-6, fd_tol: float = 1e-4) -> bool:
        ad = max(self.lin_grad, self.lin_hess, self.non_grad, self.non_hess)
        return ad <= ad_tol and max(self.fd_grad, self.fd_hess) <= fd_tol

    def as_dict(self):
        return {k: getattr(self, k) for k in ("lin_grad", "lin_hess", "non_grad", "non_hess", "fd_grad", "fd_hess", "points")}


def verify_chain_rules(
    P: NLPInstance, q: Diffeomorphism, points, functions: Optional[Sequence[Callable]] = None, fd: bool = True
) -> ChainRuleReport:
    """Check the gradient and Hessian chain rules for every problem function."""
    fns = list(functions) if functions is not None else [P.objective, *P.equalities, *P.inequalities]
    A = q.D0
    lin = Diffeomorphism.linear(A)
    rep = ChainRuleReport()
    for y in np.atleast_2d(points):
        y = np.asarray(y, dtype=float)
        x = q(y)
        Dq = q.derivative(y)
        Hq = q.component_hessians(y)
        xl = A @ y
        for fn in fns:
            outer = autodiff.derivatives(fn, x)
            comp = autodiff.derivatives(Composed(fn, q), y)
            rhs_grad = Dq.T @ outer.gradient
            rhs_hess = Dq.T @ outer.hessian @ Dq + np.einsum("k,kij->ij", outer.gradient, Hq)
            rep.non_grad = max(rep.non_grad, _rel(comp.gradient, rhs_grad))
            rep.non_hess = max(rep.non_hess, _rel(comp.hessian, rhs_hess))

            outer_l = autodiff.derivatives(fn, xl)
            comp_l = autodiff.derivatives(Composed(fn, lin), y)
            rep.lin_grad = max(rep.lin_grad, _rel(comp_l.gradient, A.T @ outer_l.gradient))
            rep.lin_hess = max(rep.lin_hess, _rel(comp_l.hessian, A.T @ outer_l.hessian @ A))

            if fd:
                composed = Composed(fn, q)
                rep.fd_grad = max(rep.fd_grad, _rel(autodiff.fd_gradient(composed, y, 1e-5, True), rhs_grad))
                rep.fd_hess = max(rep.fd_hess, _rel(autodiff.fd_hessian(composed, y, 1e-3, True), rhs_hess))
        rep.points += 1
    return rep


@dataclass
class MultiplierInvarianceReport:
    source_residual: float
    transformed_residual: float
    tol: float

    @property
    def source_ok(self) -> bool:
        return self.source_residual <= self.tol

    @property
    def transformed_ok(self) -> bool:
        return self.transformed_residual <= self.tol

    @property
    def equivalent(self) -> bool:
        return self.source_ok == self.transformed_ok

    def as_dict(self):
        return {
            "source_residual": self.source_residual,
            "transformed_residual": self.transformed_residual,
            "tol": self.tol,
            "equivalent": self.equivalent,
        }


def verify_multiplier_invariance(P: NLPInstance, q: Diffeomorphism, lam=None, mu=None, tol: float = 1e-8):
    """KKT residuals of the same multipliers before and after the transform."""
    T = transform_problem(P, q)
    return MultiplierInvarianceReport(kkt_residual(P, None, lam, mu), kkt_residual(T, None, lam, mu), tol)


@dataclass
class SecondOrderInvarianceReport:
    max_kernel_deviation: float  # relative, over sampled tangent-kernel directions
    max_general_deviation: float  # relative, over arbitrary directions
    kernel_dim_source: int
    kernel_dim_transformed: int
    max_kernel_image_residual: float  # |D(h^, g^)(0) d^| for d in the source kernel
    samples: int
    tol: float

    @property
    def passed(self) -> bool:
        return (
            self.max_kernel_deviation <= self.tol
            and self.max_general_deviation <= self.tol
            and self.kernel_dim_source == self.kernel_dim_transformed
            and self.max_kernel_image_residual <= 1e-8
        )

    def as_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["passed"] = self.passed
        return d


def verify_second_order_invariance(
    P: NLPInstance,
    q: Diffeomorphism,
    lam=None,
    mu=None,
    samples: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
    first_order_tol: float = 1e-8,
) -> SecondOrderInvarianceReport:
    """Compare ``S(d)`` with ``S^(Dq(0)^-1 d)`` for multipliers solving first order."""
    res = kkt_residual(P, None, lam, mu)
    if res > first_order_tol:
        raise PreconditionFailed(
            f"multipliers leave a first-order residual of {res:.3e}; the second-order terms differ by a curvature term"
        )
    T = transform_problem(P, q)
    D0 = q.D0
    N = tangent_kernel_basis(P)
    N_hat = tangent_kernel_basis(T)
    J_hat = autodiff.jacobian([*T.equalities, *T.inequalities], np.zeros(P.n))
    rng = np.random.default_rng(seed)
    kdev = gdev = image = 0.0
    for _ in range(samples):
        d_gen = rng.standard_normal(P.n)
        dirs = [("general", d_gen)]
        if N.shape[1]:
            dirs.append(("kernel", N @ rng.standard_normal(N.shape[1])))
        for kind, d in dirs:
            d_hat = np.linalg.solve(D0, d)
            S = second_order_term(P, np.zeros(P.n), lam, mu, d)
            S_hat = second_order_term(T, np.zeros(P.n), lam, mu, d_hat)
            dev = abs(S - S_hat) / (1.0 + abs(S))
            if kind == "kernel":
                kdev = max(kdev, dev)
                if J_hat.shape[0]:
                    image = max(image, float(np.max(np.abs(J_hat @ d_hat)) / (1.0 + np.linalg.norm(d_hat))))
            else:
                gdev = max(gdev, dev)
    return SecondOrderInvarianceReport(kdev, gdev, N.shape[1], N_hat.shape[1], image, samples, tol)
