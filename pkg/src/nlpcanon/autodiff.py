"""Forward-mode derivatives with second-order carriers.

A :class:`Jet` carries a value together with its gradient and (optionally)
its Hessian with respect to a fixed set of seed variables. Arithmetic on
jets propagates both orders exactly, so evaluating an expression, or any
Python function built from ``+ - * / **`` and the elementary functions,
on seeded jets yields exact first and second derivatives.

The finite-difference routines at the bottom are independent oracles; the
library itself never uses them to produce derivatives it reports as exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, NonFiniteError


class Jet:
    """Value, gradient and Hessian of a scalar with respect to seed variables.

    ``hess`` is ``None`` for first-order jets; mixing orders degrades the
    result to first order.
    """

    __slots__ = ("val", "grad", "hess")
    __array_ufunc__ = None  # numpy scalars defer to the reflected jet operators

    def __init__(self, val, grad, hess=None):
        self.val = float(val)
        self.grad = grad
        self.hess = hess

    # construction helpers -------------------------------------------------
    @classmethod
    def constant(cls, value, like: "Jet"):
        k = like.grad.shape[0]
        return cls(value, np.zeros(k), None if like.hess is None else np.zeros((k, k)))

    def _chain(self, f0, f1, f2):
        """Compose a scalar function with value f0, slope f1, curvature f2."""
        grad = f1 * self.grad
        hess = None
        if self.hess is not None:
            hess = f1 * self.hess + f2 * np.outer(self.grad, self.grad)
        return Jet(f0, grad, hess)

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.val + other, self.grad, self.hess)
        return Jet(self.val + other.val, self.grad + other.grad, _hsum(self.hess, other.hess))

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.val, -self.grad, None if self.hess is None else -self.hess)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            other = float(other)
            return Jet(self.val * other, self.grad * other, None if self.hess is None else self.hess * other)
        a, b = self, other
        grad = a.val * b.grad + b.val * a.grad
        hess = None
        if a.hess is not None and b.hess is not None:
            cross = np.outer(a.grad, b.grad)
            hess = a.val * b.hess + b.val * a.hess + (cross + cross.T)
        return Jet(a.val * b.val, grad, hess)

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.val
        if v == 0.0:
            raise DomainError("division by zero")
        return self._chain(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            if other == 0:
                raise DomainError("division by zero")
            return self * (1.0 / float(other))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, k):
        if not (isinstance(k, (int, np.integer)) and k >= 0):
            raise TypeError("jets support non-negative integer powers only")
        k = int(k)
        v = self.val
        if k == 0:
            return Jet.constant(1.0, self)
        if k == 1:
            return self
        f1 = k * v ** (k - 1)
        f2 = k * (k - 1) * v ** (k - 2)
        return self._chain(v**k, f1, f2)

    # elementary functions -------------------------------------------------
    def sin(self):
        s, c = math.sin(self.val), math.cos(self.val)
        return self._chain(s, c, -s)

    def cos(self):
        s, c = math.sin(self.val), math.cos(self.val)
        return self._chain(c, -s, -c)

    def exp(self):
        try:
            e = math.exp(self.val)
        except OverflowError as exc:
            raise NonFiniteError(f"exp overflow at {self.val!r}") from exc
        return self._chain(e, e, e)

    def log(self):
        v = self.val
        if v <= 0.0:
            raise DomainError(f"log of non-positive argument {v!r}")
        return self._chain(math.log(v), 1.0 / v, -1.0 / v**2)

    def sqrt(self):
        v = self.val
        if v < 0.0:
            raise DomainError(f"sqrt of negative argument {v!r}")
        if v == 0.0:
            raise NonFiniteError("sqrt is not differentiable at 0")
        s = math.sqrt(v)
        return self._chain(s, 0.5 / s, -0.25 / (s * v))

    def __repr__(self):
        return f"Jet({self.val!r}, grad={self.grad!r})"


def _hsum(a, b):
    if a is None or b is None:
        return None
    return a + b


def seed(x: Sequence[float], order: int = 2) -> list[Jet]:
    """Independent-variable jets at ``x``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    eye = np.eye(n)
    zeros = np.zeros((n, n)) if order >= 2 else None
    return [Jet(x[i], eye[i].copy(), None if zeros is None else zeros.copy()) for i in range(n)]


def as_jet(value, like: Jet) -> Jet:
    return value if isinstance(value, Jet) else Jet.constant(value, like)


def jets_from(values: np.ndarray, grads: np.ndarray, hessians=None) -> list[Jet]:
    """Build jets from stacked values (k,), gradients (k, s), Hessians (k, s, s)."""
    if hessians is None:
        return [Jet(values[i], grads[i]) for i in range(len(values))]
    return [Jet(values[i], grads[i], hessians[i]) for i in range(len(values))]


# --------------------------------------------------------------------------
# derivative evaluation


@dataclass(frozen=True)
class DerivativeBundle:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    asymmetry: float = 0.0


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteError("non-finite derivative")


def derivatives(fn: Callable, x: Sequence[float]) -> DerivativeBundle:
    """Value, exact gradient and symmetrized Hessian of ``fn`` at ``x``.

    ``fn`` is an :class:`~nlpcanon.expr.Expr` or any callable accepting a
    sequence of jets.
    """
    x = np.asarray(x, dtype=float)
    xs = seed(x, 2)
    out = as_jet(fn(xs), xs[0]) if len(xs) else None
    if out is None:
        v = float(fn([]))
        return DerivativeBundle(v, np.zeros(0), np.zeros((0, 0)))
    hess = out.hess
    asym = float(np.max(np.abs(hess - hess.T))) if hess.size else 0.0
    hess = 0.5 * (hess + hess.T)
    _check_finite([out.val], out.grad, hess)
    return DerivativeBundle(out.val, out.grad.copy(), hess, asym)


def gradient(fn: Callable, x: Sequence[float]) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    xs = seed(x, 1)
    if not xs:
        return np.zeros(0)
    out = as_jet(fn(xs), xs[0])
    _check_finite([out.val], out.grad)
    return out.grad.copy()


def hessian(fn: Callable, x: Sequence[float]) -> np.ndarray:
    return derivatives(fn, x).hessian


def jacobian(fns: Sequence[Callable], x: Sequence[float]) -> np.ndarray:
    """Row-stacked gradients; an empty list gives a 0 x n matrix."""
    x = np.asarray(x, dtype=float)
    if len(fns) == 0:
        return np.zeros((0, x.shape[0]))
    return np.vstack([gradient(f, x) for f in fns])


def value(fn: Callable, x: Sequence[float]) -> float:
    v = fn(np.asarray(x, dtype=float))
    v = v.val if isinstance(v, Jet) else float(v)
    if not math.isfinite(v):
        raise NonFiniteError("non-finite value")
    return v


def vector_derivatives(fn: Callable, x: Sequence[float], order: int = 2):
    """Derivatives of a vector-valued ``fn`` returning a sequence of scalars.

    Returns ``(values (k,), jacobian (k, n), hessians (k, n, n) or None)``.
    """
    x = np.asarray(x, dtype=float)
    xs = seed(x, order)
    outs = [as_jet(v, xs[0]) for v in fn(xs)]
    vals = np.array([o.val for o in outs])
    jac = np.array([o.grad for o in outs]).reshape(len(outs), x.shape[0])
    hess = None
    if order >= 2:
        hess = np.array([0.5 * (o.hess + o.hess.T) for o in outs]).reshape(len(outs), x.shape[0], x.shape[0])
    _check_finite(vals, jac)
    return vals, jac, hess


# --------------------------------------------------------------------------
# finite-difference oracle


def _call_real(fn, x):
    v = fn(x)
    v = v.val if isinstance(v, Jet) else float(v)
    return v


def fd_gradient(fn: Callable, x: Sequence[float], step: float = 1e-5, richardson: bool = False) -> np.ndarray:
    """Central-difference gradient; optionally one Richardson step."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]

    def central(h):
        g = np.empty(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            g[i] = (_call_real(fn, x + e) - _call_real(fn, x - e)) / (2 * h)
        return g

    g = central(step)
    if richardson:
        g = (4 * central(step / 2) - g) / 3
    return g


def fd_hessian(fn: Callable, x: Sequence[float], step: float = 1e-4, richardson: bool = False) -> np.ndarray:
    """Central second differences, symmetric by construction."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]

    def central(h):
        f0 = _call_real(fn, x)
        H = np.empty((n, n))
        for i in range(n):
            ei = np.zeros(n)
            ei[i] = h
            H[i, i] = (_call_real(fn, x + ei) - 2 * f0 + _call_real(fn, x - ei)) / h**2
            for j in range(i + 1, n):
                ej = np.zeros(n)
                ej[j] = h
                H[i, j] = H[j, i] = (
                    _call_real(fn, x + ei + ej)
                    - _call_real(fn, x + ei - ej)
                    - _call_real(fn, x - ei + ej)
                    + _call_real(fn, x - ei - ej)
                ) / (4 * h**2)
        return H

    H = central(step)
    if richardson:
        H = (4 * central(step / 2) - H) / 3
    return H


def fd_check(fn: Callable, x: Sequence[float], step: float = 1e-4, richardson: bool = False) -> tuple[float, float]:
    """Max-norm gaps between forward-mode and central-difference derivatives."""
    if not (1e-7 <= step <= 1e-2):
        raise ValueError("step must lie in [1e-7, 1e-2]")
    # the oracle samples first so a domain violation there is reported as such
    g_fd = fd_gradient(fn, x, step, richardson)
    H_fd = fd_hessian(fn, x, step, richardson)
    bundle = derivatives(fn, x)
    return float(np.max(np.abs(bundle.gradient - g_fd), initial=0.0)), float(
        np.max(np.abs(bundle.hessian - H_fd), initial=0.0)
    )
