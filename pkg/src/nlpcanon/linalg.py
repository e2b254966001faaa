"""Small dense linear algebra with explicit tolerances.

Everything here targets matrices of dimension at most a few dozen. Rank and
nullspace decisions use singular values with a relative threshold
``tol * max(1, sigma_max)``; the symmetric eigensolver is cyclic Jacobi and
the LP solver is a two-phase dense tableau simplex with Bland's rule.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import IterationCap, NoConvergence, NonFiniteError

DEFAULT_TOL = 1e-8


def _finite(M):
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise NonFiniteError("matrix has non-finite entries")
    return M


def singular_values(M) -> np.ndarray:
    M = np.atleast_2d(_finite(M))
    if M.size == 0:
        return np.zeros(0)
    return np.linalg.svd(M, compute_uv=False)


def numeric_rank(M, tol: float = DEFAULT_TOL) -> int:
    """Number of singular values above ``tol * max(1, sigma_max)``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    s = singular_values(M)
    if s.size == 0:
        return 0
    return int(np.sum(s > tol * max(1.0, s[0])))


@dataclass(frozen=True)
class EigDecomp:
    values: np.ndarray  # descending
    vectors: np.ndarray  # orthonormal columns
    sweeps: int = 0


def sym_eig(S, max_sweeps: int = 100) -> EigDecomp:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations."""
    S = _finite(S)
    n = S.shape[0]
    if S.shape != (n, n):
        raise ValueError("matrix must be square")
    scale = np.max(np.abs(S), initial=0.0)
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-12 * (1 + scale):
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (S + S.T)
    V = np.eye(n)
    if n <= 1 or scale == 0.0:
        return _sorted(np.diag(A).copy(), V, 0)

    for sweep in range(1, max_sweeps + 1):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off <= 1e-15 * max(scale, np.max(np.abs(np.diag(A)))):
            return _sorted(np.diag(A).copy(), V, sweep - 1)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                # rotation angle zeroing A[p, q] (Golub & Van Loan, sym.schur2)
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau)) if tau != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                Ap, Aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap, Aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                A[p, q] = A[q, p] = 0.0
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    raise NoConvergence(f"Jacobi iteration did not converge in {max_sweeps} sweeps")


def _sorted(values, vectors, sweeps):
    order = np.argsort(-values, kind="stable")
    return EigDecomp(values[order], vectors[:, order], sweeps)


def lambda_min(S) -> float:
    """Smallest eigenvalue of a symmetric matrix (+inf for a 0 x 0 matrix)."""
    S = np.asarray(S, dtype=float)
    if S.size == 0:
        return float("inf")
    return float(sym_eig(S).values[-1])


def min_eigpair(S):
    """Smallest eigenvalue and a unit eigenvector."""
    d = sym_eig(S)
    return float(d.values[-1]), d.vectors[:, -1]


def nullspace_basis(M, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis (as columns) of the numerical nullspace of ``M``.

    Among all orthonormal bases the one returned is the Gram-Schmidt
    orthonormalization of the projected coordinate axes, taken in order of
    decreasing projected length (ties by index), with each column's first
    large entry positive. Coordinate-aligned kernels thus come back as
    coordinate axes.
    """
    M = np.atleast_2d(_finite(M))
    rows, n = M.shape
    if rows == 0:
        return np.eye(n)
    _, s, vh = np.linalg.svd(M)
    rank = int(np.sum(s > tol * max(1.0, s[0]))) if s.size else 0
    N = vh[rank:].T
    k = N.shape[1]
    if k == 0:
        return np.zeros((n, 0))
    P = N @ N.T
    norms = np.linalg.norm(P, axis=0)
    order = sorted(range(n), key=lambda i: (-round(norms[i], 12), i))
    basis = []
    for i in order:
        v = P[:, i].copy()
        for b in basis:
            v -= (b @ v) * b
        for b in basis:  # second pass for orthogonality to rounding
            v -= (b @ v) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            v /= nv
            lead = np.flatnonzero(np.abs(v) > 1e-12)
            if lead.size and v[lead[0]] < 0:
                v = -v
            basis.append(v)
        if len(basis) == k:
            break
    return np.column_stack(basis)


# --------------------------------------------------------------------------
# linear programming


@dataclass(frozen=True)
class LPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: Optional[np.ndarray]
    objective: Optional[float]
    iterations: int = 0


def _pivot(T, row, col):
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]


def _simplex_phase(T, basis, ncols, eps, max_iter, allowed):
    """Minimize the objective stored in the last row of ``T`` (reduced costs)."""
    it = 0
    while True:
        cost = T[-1, :ncols]
        entering = next((j for j in range(ncols) if allowed[j] and cost[j] < -eps), None)
        if entering is None:
            return "optimal", it
        col = T[:-1, entering]
        ratios = [
            (T[i, -1] / col[i], basis[i], i) for i in range(len(basis)) if col[i] > eps
        ]
        if not ratios:
            return "unbounded", it
        best = min(r[0] for r in ratios)
        # Bland: among ties choose the leaving variable of smallest index
        leaving = min((r for r in ratios if r[0] <= best + eps * (1 + abs(best))), key=lambda r: r[1])[2]
        _pivot(T, leaving, entering)
        basis[leaving] = entering
        it += 1
        if it > max_iter:
            raise IterationCap(f"simplex exceeded {max_iter} pivots")


def simplex_solve_small(
    c,
    A_eq=None,
    b_eq=None,
    A_le=None,
    b_le=None,
    bounds: Optional[Sequence] = None,
    eps: float = 1e-11,
    max_iter: int = 5000,
) -> LPResult:
    """Minimize ``c @ x`` subject to ``A_eq x = b_eq``, ``A_le x <= b_le``.

    ``bounds`` lists ``(lo, hi)`` per variable, ``None`` meaning infinite;
    the default is ``x >= 0``. Two-phase dense tableau with Bland's rule.
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float)).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    A_le = np.zeros((0, n)) if A_le is None else np.atleast_2d(np.asarray(A_le, dtype=float)).reshape(-1, n)
    b_le = np.zeros(0) if b_le is None else np.asarray(b_le, dtype=float).reshape(-1)
    if bounds is None:
        bounds = [(0.0, None)] * n
    if len(bounds) != n:
        raise ValueError("bounds must have one entry per variable")
    if n + A_eq.shape[0] + A_le.shape[0] > 200:
        raise ValueError("problem too large for the dense solver")

    # x = offset + S @ u with u >= 0
    cols = []  # (variable, sign)
    offset = np.zeros(n)
    extra_le = []
    for j, (lo, hi) in enumerate(bounds):
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if lo > hi:
            return LPResult("infeasible", None, None)
        if np.isfinite(lo):
            offset[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                extra_le.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    S = np.zeros((n, len(cols)))
    for k, (j, sgn) in enumerate(cols):
        S[j, k] = sgn
    nu = len(cols)

    Aeq_u = A_eq @ S
    beq_u = b_eq - A_eq @ offset
    Ale_u = A_le @ S
    ble_u = b_le - A_le @ offset
    if extra_le:
        rows = np.zeros((len(extra_le), nu))
        for r, (k, ub) in enumerate(extra_le):
            rows[r, k] = 1.0
        Ale_u = np.vstack([Ale_u, rows])
        ble_u = np.concatenate([ble_u, [ub for _, ub in extra_le]])

    n_le = Ale_u.shape[0]
    n_eq = Aeq_u.shape[0]
    n_rows = n_le + n_eq
    # columns: u (nu), slacks (n_le), artificials (n_rows)
    ncols = nu + n_le + n_rows
    T = np.zeros((n_rows + 1, ncols + 1))
    T[:n_le, :nu] = Ale_u
    T[:n_le, nu : nu + n_le] = np.eye(n_le)
    T[:n_le, -1] = ble_u
    T[n_le:n_rows, :nu] = Aeq_u
    T[n_le:n_rows, -1] = beq_u
    for i in range(n_rows):
        if T[i, -1] < 0:
            T[i, :-1] *= -1
            T[i, -1] *= -1
    T[:n_rows, nu + n_le :ncols] = np.eye(n_rows)
    basis = list(range(nu + n_le, ncols))
    scale = max(1.0, float(np.max(np.abs(T[:n_rows]), initial=0.0)))
    tol = eps * scale

    # phase 1: minimize the sum of artificials
    T[-1, :] = 0.0
    T[-1, nu + n_le : ncols] = 1.0
    for i in range(n_rows):
        T[-1] -= T[i]
    allowed = [True] * ncols
    status, it1 = _simplex_phase(T, basis, ncols, tol, max_iter, allowed)
    if -T[-1, -1] > 1e3 * tol * max(1.0, n_rows):
        return LPResult("infeasible", None, None, it1)

    # drive remaining artificials out of the basis
    keep = list(range(n_rows))
    for i in range(n_rows):
        if basis[i] >= nu + n_le:
            j = next((j for j in range(nu + n_le) if abs(T[i, j]) > tol), None)
            if j is None:
                keep.remove(i)  # redundant equality row
            else:
                _pivot(T, i, j)
                basis[i] = j
    T = np.vstack([T[keep], T[-1:]])
    basis = [basis[i] for i in keep]
    allowed = [j < nu + n_le for j in range(ncols)]

    # phase 2
    cu = c @ S
    T[-1, :] = 0.0
    T[-1, :nu] = cu
    for i, b in enumerate(basis):
        if T[-1, b] != 0.0:
            T[-1] -= T[-1, b] * T[i]
    status, it2 = _simplex_phase(T, basis, ncols, tol, max_iter, allowed)
    if status == "unbounded":
        return LPResult("unbounded", None, None, it1 + it2)
    u = np.zeros(ncols)
    for i, b in enumerate(basis):
        u[b] = T[i, -1]
    x = offset + S @ u[:nu]
    return LPResult("optimal", x, float(c @ x), it1 + it2)
