"""The NLP instance type and the first/second-order quantities built on it."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff
from .errors import NegativeMultiplier
from .expr import ACTIVITY_TOL, ProblemDoc, load_problem, parse_problem
from .linalg import nullspace_basis


class Shifted:
    """``fn(base + x)``; translates a problem so the point of interest is 0."""

    def __init__(self, fn: Callable, base: Sequence[float]):
        self.fn = fn
        self.base = tuple(float(b) for b in base)

    def __call__(self, x):
        return self.fn([b + xi for b, xi in zip(self.base, x)])


@dataclass(frozen=True)
class NLPInstance:
    """minimize f(x) subject to h(x) = 0, g(x) <= 0, near x = 0.

    All constraints are active at the origin. Functions are callables that
    accept a sequence of floats or jets.
    """

    n: int
    objective: Callable
    equalities: tuple = ()
    inequalities: tuple = ()
    radius: float = 1.0
    var_names: tuple = ()
    eq_names: tuple = ()
    ineq_names: tuple = ()
    digest: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.var_names:
            object.__setattr__(self, "var_names", tuple(f"x{i + 1}" for i in range(self.n)))
        if not self.eq_names:
            object.__setattr__(self, "eq_names", tuple(f"h{j + 1}" for j in range(self.m)))
        if not self.ineq_names:
            object.__setattr__(self, "ineq_names", tuple(f"g{l + 1}" for l in range(self.n_ineq)))

    @property
    def m(self) -> int:
        return len(self.equalities)

    @property
    def n_ineq(self) -> int:
        return len(self.inequalities)

    @classmethod
    def from_doc(cls, doc: ProblemDoc) -> "NLPInstance":
        base = doc.point
        shift = any(b != 0.0 for b in base)

        def wrap(e):
            return Shifted(e, base) if shift else e

        digest = hashlib.sha256(doc.source.encode("utf-8")).hexdigest() if doc.source else ""
        return cls(
            n=doc.n,
            objective=wrap(doc.objective),
            equalities=tuple(wrap(e) for _, e in doc.equalities),
            inequalities=tuple(wrap(e) for _, e in doc.inequalities),
            radius=doc.radius,
            var_names=doc.variables,
            eq_names=tuple(name for name, _ in doc.equalities),
            ineq_names=tuple(name for name, _ in doc.inequalities),
            digest=digest,
            meta={"base_point": tuple(base)},
        )

    @classmethod
    def from_text(cls, text: str) -> "NLPInstance":
        return cls.from_doc(parse_problem(text))

    @classmethod
    def from_file(cls, path) -> "NLPInstance":
        return cls.from_doc(load_problem(path))

    def constraint_values(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return (
            np.array([autodiff.value(h, x) for h in self.equalities]),
            np.array([autodiff.value(g, x) for g in self.inequalities]),
        )

    def is_active(self, tol: float = ACTIVITY_TOL) -> bool:
        h, g = self.constraint_values(np.zeros(self.n))
        return bool(np.all(np.abs(h) <= tol) and np.all(np.abs(g) <= tol))


def combined_jacobian(P: NLPInstance, x=None) -> np.ndarray:
    """Rows ``Dh(x)`` followed by ``Dg(x)`` in declared order."""
    x = np.zeros(P.n) if x is None else np.asarray(x, dtype=float)
    return autodiff.jacobian(list(P.equalities) + list(P.inequalities), x)


def _multipliers(P, lam, mu):
    lam = np.zeros(P.m) if lam is None else np.asarray(lam, dtype=float).reshape(-1)
    mu = np.zeros(P.n_ineq) if mu is None else np.asarray(mu, dtype=float).reshape(-1)
    if lam.shape != (P.m,) or mu.shape != (P.n_ineq,):
        raise ValueError(f"expected {P.m} equality and {P.n_ineq} inequality multipliers")
    return lam, mu


def lagrangian_gradient(P: NLPInstance, x, lam=None, mu=None) -> np.ndarray:
    lam, mu = _multipliers(P, lam, mu)
    x = np.asarray(x, dtype=float)
    grad = autodiff.gradient(P.objective, x)
    if P.m:
        grad = grad + autodiff.jacobian(P.equalities, x).T @ lam
    if P.n_ineq:
        grad = grad + autodiff.jacobian(P.inequalities, x).T @ mu
    return grad


def kkt_residual(P: NLPInstance, x=None, lam=None, mu=None) -> float:
    """Max-norm of the Lagrangian gradient; multipliers ``mu`` must be >= 0."""
    lam, mu = _multipliers(P, lam, mu)
    if np.any(mu < 0):
        raise NegativeMultiplier(f"inequality multipliers must be non-negative, got {mu.tolist()}")
    x = np.zeros(P.n) if x is None else x
    return float(np.max(np.abs(lagrangian_gradient(P, x, lam, mu)), initial=0.0))


def lagrangian_hessian(P: NLPInstance, x=None, lam=None, mu=None) -> np.ndarray:
    lam, mu = _multipliers(P, lam, mu)
    x = np.zeros(P.n) if x is None else np.asarray(x, dtype=float)
    L = autodiff.hessian(P.objective, x)
    for coef, fn in list(zip(lam, P.equalities)) + list(zip(mu, P.inequalities)):
        if coef != 0.0:
            L = L + coef * autodiff.hessian(fn, x)
    return L


def second_order_term(P: NLPInstance, x, lam, mu, d) -> float:
    """``d' (f'' + sum lam_j h_j'' + sum mu_l g_l'') d`` at ``x``."""
    d = np.asarray(d, dtype=float)
    return float(d @ lagrangian_hessian(P, x, lam, mu) @ d)


def tangent_kernel_basis(P: NLPInstance, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis of ``{d : Dh(0) d = 0, Dg(0) d = 0}`` as columns."""
    return nullspace_basis(combined_jacobian(P), tol)
