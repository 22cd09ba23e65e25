"""Small dense linear algebra: null spaces, particular solutions and a
two-phase simplex solver.

Everything here works on plain ``numpy`` arrays in float64.  The LP solver
keeps a dense tableau and pivots with Dantzig's rule, falling back to
Bland's rule on degenerate stalls.  It is meant for the small programs this
package produces (a few thousand columns, a handful of rows).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    InfeasibleSystemError,
    InvalidInputError,
    LPInfeasibleError,
    LPUnboundedError,
)

__all__ = [
    "LinearProgram",
    "null_space_basis",
    "particular_solution",
    "simplex_solve",
]


def _as_matrix(A, name="A"):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be two-dimensional, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return A


def null_space_basis(A, rank_tol=None):
    """Orthonormal basis of ``{x : A x = 0}``.

    Uses a column-pivoted Householder QR of ``A.T``.  The numerical rank is
    the number of diagonal entries of ``R`` above ``rank_tol``, which
    defaults to ``1e-10 * max|A|``.

    Returns an ``n x (n - rank)`` matrix with orthonormal columns (possibly
    with zero columns).
    """
    A = _as_matrix(A)
    m, n = A.shape
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    if rank_tol is None:
        rank_tol = 1e-10 * max(scale, 1.0)
    if rank_tol <= 0:
        raise InvalidInputError("rank_tol must be positive")
    if scale == 0.0:
        return np.eye(n)
    Q, R, _ = scipy.linalg.qr(A.T, mode="full", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rank_tol))
    return np.ascontiguousarray(Q[:, rank:])


def particular_solution(A, b, tol=1e-9):
    """Minimum-norm ``x`` with ``A x = b``.

    Raises ``InfeasibleSystemError`` when the least-squares residual exceeds
    ``tol`` in the max norm, i.e. when ``b`` is not in the range of ``A``.
    """
    A = _as_matrix(A)
    b = np.asarray(b, dtype=float).ravel()
    if b.shape[0] != A.shape[0]:
        raise InvalidInputError(f"b has length {b.shape[0]}, expected {A.shape[0]}")
    if not np.all(np.isfinite(b)):
        raise InvalidInputError("b contains non-finite entries")
    x = np.linalg.lstsq(A, b, rcond=None)[0]
    residual = float(np.max(np.abs(A @ x - b))) if b.size else 0.0
    if residual > tol:
        raise InfeasibleSystemError(
            f"inconsistent linear system: residual {residual:.3e} > {tol:.1e}",
            residual=residual,
        )
    return x


@dataclass(frozen=True)
class LinearProgram:
    """``min cost @ x  s.t.  eq_lhs @ x = eq_rhs,  x >= lower_bounds``."""

    cost: np.ndarray
    eq_lhs: np.ndarray
    eq_rhs: np.ndarray
    lower_bounds: np.ndarray

    def __post_init__(self):
        cost = np.asarray(self.cost, dtype=float).ravel()
        A = np.asarray(self.eq_lhs, dtype=float)
        if A.ndim == 1:
            A = A[None, :]
        b = np.asarray(self.eq_rhs, dtype=float).ravel()
        lb = np.asarray(self.lower_bounds, dtype=float).ravel()
        n = cost.shape[0]
        if A.shape != (b.shape[0], n) or lb.shape[0] != n:
            raise InvalidInputError(
                f"inconsistent LP dimensions: cost {cost.shape}, eq_lhs {A.shape}, "
                f"eq_rhs {b.shape}, lower_bounds {lb.shape}"
            )
        for name, arr in (("cost", cost), ("eq_lhs", A), ("eq_rhs", b), ("lower_bounds", lb)):
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"LP {name} contains non-finite entries")
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "eq_lhs", A)
        object.__setattr__(self, "eq_rhs", b)
        object.__setattr__(self, "lower_bounds", lb)

    @property
    def n(self):
        return self.cost.shape[0]

    def objective(self, x):
        return float(self.cost @ x)


def _pivot(T, row, col):
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])


def _run_simplex(T, basis, n_cols, tol, max_iter, degenerate_limit=50):
    """Pivot on tableau ``T`` whose last row is the reduced-cost row and last
    column the right-hand side.  Only the first ``n_cols`` columns may enter
    the basis.

    Entering columns follow Dantzig's most-negative rule; after
    ``degenerate_limit`` consecutive degenerate pivots the remaining
    iterations use Bland's rule, which cannot cycle.
    """
    m = T.shape[0] - 1
    bland = False
    streak = 0
    for _ in range(max_iter):
        reduced = T[-1, :n_cols]
        candidates = np.flatnonzero(reduced < -tol)
        if candidates.size == 0:
            return
        col = int(candidates[0]) if bland else int(candidates[np.argmin(reduced[candidates])])
        column = T[:m, col]
        positive = column > tol
        if not np.any(positive):
            raise LPUnboundedError("LP objective is unbounded below")
        ratios = np.full(m, np.inf)
        ratios[positive] = T[:m, -1][positive] / column[positive]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        row = int(min(ties, key=lambda r: basis[r]))
        streak = streak + 1 if best <= tol else 0
        if streak >= degenerate_limit:
            bland = True
        _pivot(T, row, col)
        basis[row] = col
    raise LPUnboundedError(f"simplex did not terminate within {max_iter} pivots")


def simplex_solve(lp: LinearProgram, tol=1e-10, max_iter=None):
    """Solve ``lp`` with the two-phase dense simplex method.

    Returns an optimal ``x``.  Raises ``LPInfeasibleError`` (carrying the
    phase-1 residual) or ``LPUnboundedError``.
    """
    A, b, c, lb = lp.eq_lhs, lp.eq_rhs, lp.cost, lp.lower_bounds
    m, n = A.shape
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000

    # shift to y = x - lb >= 0 and make the right-hand side nonnegative
    rhs = b - A @ lb
    sign = np.where(rhs < 0, -1.0, 1.0)
    A1 = A * sign[:, None]
    rhs = rhs * sign
    scale = max(1.0, float(np.max(np.abs(rhs))) if m else 1.0)

    # phase 1: artificial columns n..n+m-1, objective = sum of artificials
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A1
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = rhs
    T[-1, :n] = -A1.sum(axis=0)
    T[-1, -1] = -rhs.sum()
    basis = list(range(n, n + m))
    _run_simplex(T, basis, n + m, tol, max_iter)

    residual = -T[-1, -1]
    if residual > 1e-9 * scale:
        raise LPInfeasibleError(
            f"LP is infeasible: phase-1 residual {residual:.3e}", residual=float(residual)
        )

    # drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= n:
            row = T[r, :n]
            nz = np.flatnonzero(np.abs(row) > 1e-9)
            if nz.size:
                col = int(nz[0])
                _pivot(T, r, col)
                basis[r] = col
                keep.append(r)
        else:
            keep.append(r)

    # phase 2 on the original cost
    T2 = np.zeros((len(keep) + 1, n + 1))
    T2[:-1, :n] = T[keep, :n]
    T2[:-1, -1] = T[keep, -1]
    basis2 = [basis[r] for r in keep]
    T2[-1, :n] = c
    for r, j in enumerate(basis2):
        T2[-1] -= c[j] * T2[r]
    _run_simplex(T2, basis2, n, tol, max_iter)

    y = np.zeros(n)
    if basis2:
        # re-solve the basic system directly to clean up accumulated pivot error
        B = A1[keep][:, basis2]
        try:
            y_basic = np.linalg.solve(B, rhs[keep])
        except np.linalg.LinAlgError:
            y_basic = T2[:-1, -1]
        if np.any(y_basic < -1e-9 * scale):
            y_basic = T2[:-1, -1]
        y[basis2] = np.maximum(y_basic, 0.0)
    return y + lb
