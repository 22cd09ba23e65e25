"""Convex vector optimization problems ``min f(x) s.t. g(x) <= 0``.

A problem supplies objective and constraint values, their Jacobians and the
Hessian-vector product of the (augmented) scalarized Lagrangian.  All batch
methods take ``X`` with shape ``(K, N)`` (one row per scalarization) and
return arrays with a leading ``K`` axis.

Five built-ins are available through :func:`make_builtin`:

``box_biobjective``
    ``(|x|^2, |x - 2|^2) / N`` over the unit box.
``test_instance_4``
    ``f_i(x) = (x_i - 1)^2 + sum_{j != i} x_j^2`` with ``g_j = f_j - 1``.
``hyperball``
    ``f_i(x) = x_i^2`` over a unit ball centred at ``(1 + eps) 1``.
``mean_variance``
    Markowitz with no short selling; the budget equality is eliminated.
``lvop``
    Linear ``min C x s.t. A x <= b``, trained with a small ``|x|^2``
    augmentation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .errors import (
    ConvergenceError,
    DualInfeasibleError,
    InvalidInputError,
)
from .linalg import LinearProgram, null_space_basis, simplex_solve

__all__ = [
    "BUILTIN_NAMES",
    "EvalBundle",
    "Problem",
    "BoxBiobjective",
    "TestInstance4",
    "Hyperball",
    "MeanVariance",
    "LinearVectorProblem",
    "evaluate",
    "weighted_hvp",
    "dual_value",
    "make_builtin",
    "problem_from_descriptor",
    "closed_form_reference",
]

BUILTIN_NAMES = ("box_biobjective", "test_instance_4", "hyperball", "mean_variance", "lvop")

LVOP_DEFAULT_C = [[1.0, 0.0], [0.0, 1.0]]
LVOP_DEFAULT_A = [[-2.0, -1.0], [-1.0, -2.0], [1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
LVOP_DEFAULT_B = [-2.0, -2.0, 6.0, 0.0, 0.0]


def _rows(X, n, name="x"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n:
        raise InvalidInputError(f"{name} must have {n} columns, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return X


@dataclass
class EvalBundle:
    f: np.ndarray
    g: np.ndarray
    Jf: np.ndarray
    Jg: np.ndarray


class Problem:
    """Base class for a CVOP instance.

    Subclasses set ``name, N, P, M`` and ``slater_point`` and implement the
    batch evaluators.  The Jacobian-product helpers default to dense
    contractions and can be overridden when the structure is cheaper.
    """

    name = "problem"
    objective_scale = 1.0
    scalarization_floor = 0.0
    floor_components: tuple = ()
    centered = False
    augmentation = 0.0
    has_closed_form_dual = False

    # -- required evaluators -------------------------------------------------
    def objectives(self, X):
        raise NotImplementedError

    def constraints(self, X):
        raise NotImplementedError

    def objective_jacobian(self, X):
        raise NotImplementedError

    def constraint_jacobian(self, X):
        raise NotImplementedError

    def weighted_hvp(self, X, W, L, delta, V):
        """``[(1-delta) sum_i w_i H f_i + 2 delta I + sum_j l_j H g_j] v`` row-wise."""
        raise NotImplementedError

    def params(self):
        """JSON-serializable constructor parameters."""
        return {}

    # -- derived helpers -----------------------------------------------------
    def objective_vjp(self, X, W):
        """Rows of ``Jf(x)^T w``."""
        return np.einsum("kpn,kp->kn", self.objective_jacobian(X), W)

    def constraint_vjp(self, X, L):
        """Rows of ``Jg(x)^T lam``."""
        return np.einsum("kmn,km->kn", self.constraint_jacobian(X), L)

    def constraint_jvp(self, X, V):
        """Rows of ``Jg(x) v``."""
        return np.einsum("kmn,kn->km", self.constraint_jacobian(X), V)

    def constraint_gradient(self, x, j):
        """Gradient of the single constraint ``g_j`` at one point ``x``."""
        return self.constraint_jacobian(x[None, :])[0, j]

    def dual(self, L, W):
        """Batch dual function ``d(lam, w)``; numeric by default."""
        return np.array([self._numeric_dual(l, w) for l, w in zip(L, W)])

    def sampling_box(self):
        """Box ``(lo, hi)`` from which the random baseline draws raw points."""
        raise NotImplementedError

    def clamp_weights(self, W):
        """Raise floored weight components to the scalarization floor."""
        W = np.array(W, dtype=float, copy=True)
        if self.scalarization_floor > 0 and self.floor_components:
            if W.shape[1] != 2:
                raise InvalidInputError("floored weights are only supported for P = 2")
            for i in self.floor_components:
                low = W[:, i] < self.scalarization_floor
                W[low, i] = self.scalarization_floor
                W[low, 1 - i] = 1.0 - self.scalarization_floor
        return W

    def descriptor(self):
        return {"name": self.name, "params": self.params()}

    def lagrangian(self, x, w, lam):
        x = x[None, :]
        return float(self.objectives(x)[0] @ w + self.constraints(x)[0] @ lam)

    def lagrangian_grad(self, x, w, lam):
        x = x[None, :]
        return self.objective_vjp(x, w[None, :])[0] + self.constraint_vjp(x, lam[None, :])[0]

    def dual_minimizer(self, L, W):
        """A minimizer of the Lagrangian for each row (numeric by default)."""
        return np.array([self._minimize_lagrangian(l, w)[1] for l, w in zip(L, W)])

    def dual_gradient(self, L, W):
        """``d d / d lam = g(x_lam)`` by Danskin's theorem."""
        return self.constraints(self.dual_minimizer(L, W))

    def _numeric_dual(self, lam, w, gtol=1e-8, max_iter=100_000):
        return self._minimize_lagrangian(lam, w, gtol, max_iter)[0]

    def _minimize_lagrangian(self, lam, w, gtol=1e-8, max_iter=100_000):
        """Minimize the Lagrangian by gradient descent with Armijo
        backtracking (c = 1e-4, shrink 1/2) starting at the Slater point.
        Returns ``(value, x)``."""
        x = np.array(self.slater_point, dtype=float)
        val = self.lagrangian(x, w, lam)
        step = 1.0
        for _ in range(max_iter):
            grad = self.lagrangian_grad(x, w, lam)
            gnorm = float(np.linalg.norm(grad))
            if gnorm <= gtol:
                return val, x
            step = min(step * 2.0, 1e6)
            while True:
                x_new = x - step * grad
                val_new = self.lagrangian(x_new, w, lam)
                if val_new <= val - 1e-4 * step * gnorm**2:
                    break
                # near the minimum the decrease is below roundoff; fall back to
                # requiring a smaller gradient
                if (abs(val_new - val) <= 1e-14 * max(1.0, abs(val))
                        and np.linalg.norm(self.lagrangian_grad(x_new, w, lam)) < gnorm):
                    break
                step *= 0.5
                if step < 1e-300:
                    raise ConvergenceError("line search failed in dual minimization", gnorm)
            x, val = x_new, val_new
        raise ConvergenceError(
            f"dual minimization did not converge (gradient norm {gnorm:.3e})", gnorm
        )

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} N={self.N} P={self.P} M={self.M}>"


class BoxBiobjective(Problem):
    """``min (|x|^2, |x - 2 1|^2)/N  s.t.  0 <= x <= 1`` with ``A = [I; -I]``."""

    name = "box_biobjective"
    has_closed_form_dual = True

    def __init__(self, N=40):
        N = int(N)
        if N < 1:
            raise InvalidInputError("N must be positive")
        self.N, self.P, self.M = N, 2, 2 * N
        self.A = np.vstack([np.eye(N), -np.eye(N)])
        self.b = np.concatenate([np.ones(N), np.zeros(N)])
        self.slater_point = np.full(N, 0.5)
        # the objective is trained as N f(x)
        self.objective_scale = float(N)

    def params(self):
        return {"N": self.N}

    def objectives(self, X):
        N = self.N
        return np.stack([np.sum(X**2, axis=1) / N, np.sum((X - 2.0) ** 2, axis=1) / N], axis=1)

    def constraints(self, X):
        return np.concatenate([X - 1.0, -X], axis=1)

    def objective_jacobian(self, X):
        return np.stack([2.0 * X / self.N, 2.0 * (X - 2.0) / self.N], axis=1)

    def constraint_jacobian(self, X):
        return np.broadcast_to(self.A, (X.shape[0],) + self.A.shape)

    def objective_vjp(self, X, W):
        return 2.0 * (W[:, :1] * X + W[:, 1:2] * (X - 2.0)) / self.N

    def constraint_vjp(self, X, L):
        N = self.N
        return L[:, :N] - L[:, N:]

    def constraint_jvp(self, X, V):
        return np.concatenate([V, -V], axis=1)

    def constraint_gradient(self, x, j):
        return self.A[j].copy()

    def weighted_hvp(self, X, W, L, delta, V):
        coef = (1.0 - delta) * 2.0 * W.sum(axis=1, keepdims=True) / self.N + 2.0 * delta
        return coef * V

    def dual(self, L, W):
        N = self.N
        AtL = L[:, :N] - L[:, N:]
        quad = np.sum(AtL**2, axis=1)
        A1 = np.concatenate([np.ones(N), -np.ones(N)])
        lin = np.sum((2.0 * W[:, 1:2] * A1[None, :] - self.b[None, :]) * L, axis=1)
        return -N / 4.0 * quad + lin + 4.0 * W[:, 0] * W[:, 1]

    def dual_minimizer(self, L, W):
        N = self.N
        AtL = L[:, :N] - L[:, N:]
        return (2.0 * W[:, 1:2] - 0.5 * N * AtL) / W.sum(axis=1, keepdims=True)

    def sampling_box(self):
        return np.zeros(self.N), np.ones(self.N)

    def reference(self, w):
        w = np.asarray(w, dtype=float)
        N = self.N
        lam = np.zeros(self.M)
        if w[1] <= 0.5:
            x = np.full(N, 2.0 * w[1])
        else:
            x = np.ones(N)
            lam[:N] = 2.0 / N * (w[1] - w[0])
        return x, lam


class TestInstance4(Problem):
    """``f_i(x) = (x_i - 1)^2 + sum_{j != i} x_j^2`` for ``i <= P`` and
    ``g_j = f_j - 1`` (so ``M = P``)."""

    __test__ = False  # not a pytest class
    name = "test_instance_4"
    has_closed_form_dual = True

    def __init__(self, P=2, N=20):
        P, N = int(P), int(N)
        if P < 1 or N < P:
            raise InvalidInputError("test_instance_4 requires 1 <= P <= N")
        self.N, self.P, self.M = N, P, P
        self.slater_point = np.zeros(N)
        self.slater_point[:P] = 1.0 / P

    def params(self):
        return {"P": self.P, "N": self.N}

    def objectives(self, X):
        sq = np.sum(X**2, axis=1, keepdims=True)
        return sq - 2.0 * X[:, : self.P] + 1.0

    def constraints(self, X):
        return self.objectives(X) - 1.0

    def objective_jacobian(self, X):
        J = np.repeat(2.0 * X[:, None, :], self.P, axis=1)
        idx = np.arange(self.P)
        J[:, idx, idx] -= 2.0
        return J

    constraint_jacobian = objective_jacobian

    def objective_vjp(self, X, W):
        out = 2.0 * X * W.sum(axis=1, keepdims=True)
        out[:, : self.P] -= 2.0 * W
        return out

    def constraint_vjp(self, X, L):
        return self.objective_vjp(X, L)

    def constraint_jvp(self, X, V):
        return 2.0 * (X * V).sum(axis=1, keepdims=True) - 2.0 * V[:, : self.P]

    def weighted_hvp(self, X, W, L, delta, V):
        coef = 2.0 * (1.0 - delta) * W.sum(axis=1, keepdims=True) + 2.0 * delta \
            + 2.0 * L.sum(axis=1, keepdims=True)
        return coef * V

    def dual_minimizer(self, L, W):
        c = W + L
        u = np.zeros((W.shape[0], self.N))
        u[:, : self.P] = c / c.sum(axis=1, keepdims=True)
        return u

    def dual(self, L, W):
        u = self.dual_minimizer(L, W)
        return np.sum((W + L) * self.objectives(u) - L, axis=1)

    def sampling_box(self):
        lo = np.zeros(self.N)
        hi = np.zeros(self.N)
        hi[: self.P] = 1.0
        return lo, hi


class Hyperball(Problem):
    """``f_i(x) = x_i^2`` (``P = N``) with ``g(x) = |x - (1+eps) 1| - 1``.

    The constraint is not differentiable at the ball's centre; its gradient
    and Hessian are taken as zero there.  Training uses the centred
    parametrization (raw network outputs are offsets from the centre).
    """

    name = "hyperball"
    centered = True

    def __init__(self, N=2, eps=0.01):
        N = int(N)
        if N < 1 or eps <= 0:
            raise InvalidInputError("hyperball requires N >= 1 and eps > 0")
        self.N = self.P = N
        self.M = 1
        self.eps = float(eps)
        self.center = 1.0 + self.eps
        self.slater_point = np.full(N, self.center)

    def params(self):
        return {"N": self.N, "eps": self.eps}

    def _radius(self, X):
        D = X - self.center
        return D, np.sqrt(np.sum(D**2, axis=1))

    def objectives(self, X):
        return X**2

    def constraints(self, X):
        return self._radius(X)[1][:, None] - 1.0

    def objective_jacobian(self, X):
        K, N = X.shape
        J = np.zeros((K, N, N))
        idx = np.arange(N)
        J[:, idx, idx] = 2.0 * X
        return J

    def constraint_jacobian(self, X):
        D, r = self._radius(X)
        safe = np.where(r > 0, r, 1.0)
        return (np.where(r[:, None] > 0, D / safe[:, None], 0.0))[:, None, :]

    def objective_vjp(self, X, W):
        return 2.0 * W * X

    def constraint_vjp(self, X, L):
        return self.constraint_jacobian(X)[:, 0, :] * L

    def constraint_jvp(self, X, V):
        return np.sum(self.constraint_jacobian(X)[:, 0, :] * V, axis=1, keepdims=True)

    def weighted_hvp(self, X, W, L, delta, V):
        D, r = self._radius(X)
        out = 2.0 * (1.0 - delta) * W * V + 2.0 * delta * V
        pos = r > 0
        if np.any(pos):
            rp = r[pos][:, None]
            U = D[pos] / rp
            Vp = V[pos]
            proj = Vp - U * np.sum(U * Vp, axis=1, keepdims=True)
            out[pos] += L[pos, :1] * proj / rp
        return out

    def dual(self, L, W):
        return np.array([self._dual_one(float(l[0]), w)[0] for l, w in zip(L, W)])

    def dual_minimizer(self, L, W):
        return np.array([self._dual_one(float(l[0]), w)[1] for l, w in zip(L, W)])

    def _dual_one(self, lam, w):
        """Exact 1-D reduction of ``inf_x sum w_i x_i^2 + lam (|x - c 1| - 1)``.

        Stationarity gives ``x_i = c mu / (2 w_i + mu)`` with ``mu = lam / r``;
        ``mu`` solves the monotone equation ``mu r(mu) = lam``.  When
        ``lam >= c |2 w|`` the minimizer is the (non-smooth) centre.
        Returns ``(value, minimizer)``.
        """
        c = self.center
        w = np.asarray(w, dtype=float)
        if lam <= 0.0:
            return 0.0, np.zeros(self.N)
        two_w = 2.0 * w
        if lam >= c * np.linalg.norm(two_w):
            return float(np.sum(w) * c**2 - lam), np.full(self.N, c)

        held = two_w > 0  # coordinates with w_i = 0 sit at the centre

        def ratio(mu):
            return np.where(held, two_w / np.where(held, two_w + mu, 1.0), 0.0)

        def residual(mu):
            return mu * c * np.linalg.norm(ratio(mu)) - lam

        hi = 1.0
        while residual(hi) < 0:
            hi *= 2.0
        mu = scipy.optimize.brentq(residual, 0.0, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
        x = c * (1.0 - ratio(mu))
        r = c * np.linalg.norm(ratio(mu))
        return float(np.sum(w * x**2) + lam * (r - 1.0)), x

    def sampling_box(self):
        return np.full(self.N, self.center - 1.0), np.full(self.N, self.center + 1.0)


class MeanVariance(Problem):
    """Markowitz ``(-r^T xh, 0.5 xh^T C xh)`` with ``xh >= 0`` and ``1^T xh = 1``.

    The budget constraint is eliminated by ``xh = B x + xt`` with
    ``B = [I; -1^T]`` and ``xt = e_S``, leaving ``N = S - 1`` variables and
    ``M = S`` sign constraints ``g(x) = -(B x + xt)``.  Strict convexity of
    the scalarization needs ``w_2 > 0``; weights are floored at 1e-5.
    """

    name = "mean_variance"
    has_closed_form_dual = True
    scalarization_floor = 1e-5
    floor_components = (1,)

    def __init__(self, r_bar, C, slater_level=7.5e-5, assets=None):
        r_bar = np.asarray(r_bar, dtype=float).ravel()
        C = np.asarray(C, dtype=float)
        S = r_bar.shape[0]
        if S < 2 or C.shape != (S, S):
            raise InvalidInputError("mean_variance needs S >= 2 assets and an S x S covariance")
        if not (np.all(np.isfinite(r_bar)) and np.all(np.isfinite(C))):
            raise InvalidInputError("mean_variance data contains non-finite entries")
        if not np.allclose(C, C.T, atol=1e-12 * max(1.0, np.abs(C).max())):
            raise InvalidInputError("covariance matrix is not symmetric")
        C = 0.5 * (C + C.T)
        try:
            np.linalg.cholesky(C)
        except np.linalg.LinAlgError:
            raise InvalidInputError("covariance matrix is not positive definite") from None
        self.r_bar, self.C = r_bar, C
        self.assets = list(assets) if assets is not None else None
        self.S = S
        self.N, self.P, self.M = S - 1, 2, S
        self.basis = np.vstack([np.eye(S - 1), -np.ones((1, S - 1))])
        self.offset = np.zeros(S)
        self.offset[-1] = 1.0
        self.slater_level = float(slater_level)
        self.slater_point = np.full(self.N, self.slater_level)
        if not np.all(self.constraints(self.slater_point[None, :]) < 0):
            raise InvalidInputError("slater_level does not give a strictly feasible portfolio")
        B = self.basis
        self._Q = B.T @ C @ B
        self._Q_chol = np.linalg.cholesky(self._Q)
        self._Br = B.T @ r_bar
        self._BCe = B.T @ C @ self.offset

    def params(self):
        out = {"r_bar": self.r_bar.tolist(), "C": self.C.tolist(), "slater_level": self.slater_level}
        if self.assets is not None:
            out["assets"] = list(self.assets)
        return out

    def portfolio(self, X):
        return X @ self.basis.T + self.offset

    def objectives(self, X):
        H = self.portfolio(X)
        return np.stack([-H @ self.r_bar, 0.5 * np.sum((H @ self.C) * H, axis=1)], axis=1)

    def constraints(self, X):
        return -self.portfolio(X)

    def objective_jacobian(self, X):
        H = self.portfolio(X)
        g1 = np.broadcast_to(-self._Br, X.shape)
        g2 = H @ self.C @ self.basis
        return np.stack([g1, g2], axis=1)

    def constraint_jacobian(self, X):
        return np.broadcast_to(-self.basis, (X.shape[0],) + self.basis.shape)

    def objective_vjp(self, X, W):
        H = self.portfolio(X)
        return -W[:, :1] * self._Br + W[:, 1:2] * (H @ self.C @ self.basis)

    def constraint_vjp(self, X, L):
        return -L @ self.basis

    def constraint_jvp(self, X, V):
        return -V @ self.basis.T

    def constraint_gradient(self, x, j):
        return -self.basis[j].copy()

    def weighted_hvp(self, X, W, L, delta, V):
        return (1.0 - delta) * W[:, 1:2] * (V @ self._Q) + 2.0 * delta * V

    def dual_minimizer(self, L, W):
        w1, w2 = W[:, 0], W[:, 1]
        if np.any(w2 <= 0):
            raise DualInfeasibleError("mean-variance dual is -inf for w_2 = 0")
        rhs = L @ self.basis + w1[:, None] * self._Br - w2[:, None] * self._BCe
        Lc = self._Q_chol
        return np.linalg.solve(Lc.T, np.linalg.solve(Lc, rhs.T)).T / w2[:, None]

    def dual(self, L, W):
        Z = self.dual_minimizer(L, W)
        H = self.portfolio(Z)
        F = self.objectives(Z)
        return np.sum(W * F, axis=1) - np.sum(L * H, axis=1)

    def sampling_box(self):
        return np.zeros(self.N), np.ones(self.N)


class LinearVectorProblem(Problem):
    """``min C x  s.t.  A x <= b``, trained on the ``delta |x|^2`` augmented
    scalarization.  Its dual is ``-b^T lam`` on ``{A^T lam = -C^T w}``."""

    name = "lvop"
    has_closed_form_dual = True

    def __init__(self, C=None, A=None, b=None, delta=1e-4, slater_point=None, dual_margin=5e-3):
        C = np.asarray(LVOP_DEFAULT_C if C is None else C, dtype=float)
        A = np.asarray(LVOP_DEFAULT_A if A is None else A, dtype=float)
        b = np.asarray(LVOP_DEFAULT_B if b is None else b, dtype=float).ravel()
        if C.ndim != 2 or A.ndim != 2 or A.shape[1] != C.shape[1] or b.shape[0] != A.shape[0]:
            raise InvalidInputError("inconsistent LVOP dimensions")
        if not (0.0 <= delta < 1.0):
            raise InvalidInputError("delta must lie in [0, 1)")
        self.C, self.A, self.b = C, A, b
        self.P, self.N = C.shape
        self.M = A.shape[0]
        if null_space_basis(A).shape[1] != 0:
            raise InvalidInputError("LVOP constraint matrix A must have full column rank")
        self.augmentation = float(delta)
        self.dual_margin = float(dual_margin)
        self.dual_basis = null_space_basis(A.T)
        if slater_point is None:
            slater_point = self._find_slater_point()
        self.slater_point = np.asarray(slater_point, dtype=float)
        if not np.all(self.constraints(self.slater_point[None, :]) < 0):
            raise InvalidInputError("LVOP slater_point is not strictly feasible")
        self._dual_cache = {}

    def params(self):
        return {
            "C": self.C.tolist(), "A": self.A.tolist(), "b": self.b.tolist(),
            "delta": self.augmentation, "slater_point": self.slater_point.tolist(),
            "dual_margin": self.dual_margin,
        }

    def _find_slater_point(self):
        ones = np.ones(self.N)
        if np.all(self.A @ ones - self.b < 0):
            return ones
        # max s  s.t.  A (u - v) + s 1 + slack = b,  s <= 1,  u, v, s, slack >= 0
        M, N = self.A.shape
        n_var = 2 * N + 1 + M + 1
        lhs = np.zeros((M + 1, n_var))
        lhs[:M, :N] = self.A
        lhs[:M, N:2 * N] = -self.A
        lhs[:M, 2 * N] = 1.0
        lhs[:M, 2 * N + 1:2 * N + 1 + M] = np.eye(M)
        lhs[M, 2 * N] = 1.0
        lhs[M, -1] = 1.0
        rhs = np.concatenate([self.b, [1.0]])
        cost = np.zeros(n_var)
        cost[2 * N] = -1.0
        sol = simplex_solve(LinearProgram(cost, lhs, rhs, np.zeros(n_var)))
        if sol[2 * N] <= 0:
            raise InvalidInputError("LVOP feasible set has empty interior (no Slater point)")
        return sol[:N] - sol[N:2 * N]

    def objectives(self, X):
        return X @ self.C.T

    def constraints(self, X):
        return X @ self.A.T - self.b

    def objective_jacobian(self, X):
        return np.broadcast_to(self.C, (X.shape[0],) + self.C.shape)

    def constraint_jacobian(self, X):
        return np.broadcast_to(self.A, (X.shape[0],) + self.A.shape)

    def objective_vjp(self, X, W):
        return W @ self.C

    def constraint_vjp(self, X, L):
        return L @ self.A

    def constraint_jvp(self, X, V):
        return V @ self.A.T

    def constraint_gradient(self, x, j):
        return self.A[j].copy()

    def weighted_hvp(self, X, W, L, delta, V):
        return 2.0 * delta * V

    def dual_residual(self, L, W):
        return np.max(np.abs(L @ self.A + W @ self.C), axis=1)

    def dual(self, L, W):
        res = self.dual_residual(L, W)
        if np.any(res > 1e-6):
            raise DualInfeasibleError(
                f"multiplier violates A^T lam = -C^T w (residual {res.max():.3e}); d = -inf"
            )
        return -L @ self.b

    def dual_gradient(self, L, W):
        # d is linear on the dual-feasible affine set
        return np.broadcast_to(-self.b, L.shape).copy()

    def _vertex_dual_point(self, i):
        """``argmin 1^T lam  s.t.  A^T lam = -C^T e_i, lam >= margin`` (cached)."""
        hit = self._dual_cache.get(i)
        if hit is None:
            lp = LinearProgram(np.ones(self.M), self.A.T, -self.C[i],
                               np.full(self.M, self.dual_margin))
            hit = simplex_solve(lp)
            self._dual_cache[i] = hit
        return hit

    def strict_dual_points(self, W):
        """Strictly positive dual-feasible points for each row of ``W``.

        The LP is solved once per simplex vertex and blended with the
        weights, which keeps ``A^T lam = -C^T w`` and ``lam >= margin`` while
        making the point affine (hence smooth) in ``w``.
        """
        W = np.atleast_2d(np.asarray(W, dtype=float))
        V = np.array([self._vertex_dual_point(i) for i in range(self.P)])
        return W @ V

    def strict_dual_point(self, w):
        return self.strict_dual_points(w)[0]

    def sampling_box(self):
        # bounding box of {A x <= b}: one LP per coordinate and direction
        lo = [self._extreme(i, 1.0) for i in range(self.N)]
        hi = [-self._extreme(i, -1.0) for i in range(self.N)]
        return np.array(lo), np.array(hi)

    def _extreme(self, i, sgn):
        M, N = self.A.shape
        n_var = 2 * N + M
        lhs = np.hstack([self.A, -self.A, np.eye(M)])
        cost = np.zeros(n_var)
        cost[i] = sgn
        cost[N + i] = -sgn
        try:
            sol = simplex_solve(LinearProgram(cost, lhs, self.b, np.zeros(n_var)))
        except Exception as exc:
            raise InvalidInputError("LVOP feasible set is unbounded; no sampling box") from exc
        return float(cost @ sol)


_BUILDERS = {
    "box_biobjective": BoxBiobjective,
    "test_instance_4": TestInstance4,
    "hyperball": Hyperball,
    "mean_variance": MeanVariance,
    "lvop": LinearVectorProblem,
}


def make_builtin(name, **params):
    """Construct a built-in problem by name."""
    try:
        cls = _BUILDERS[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown problem {name!r}; choose from {', '.join(BUILTIN_NAMES)}"
        ) from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise InvalidInputError(f"bad parameters for {name}: {exc}") from None


def problem_from_descriptor(desc):
    return make_builtin(desc["name"], **desc.get("params", {}))


def evaluate(problem, x):
    """Values and Jacobians at a single point ``x``."""
    X = _rows(x, problem.N)
    return EvalBundle(
        f=problem.objectives(X)[0],
        g=problem.constraints(X)[0],
        Jf=np.array(problem.objective_jacobian(X)[0]),
        Jg=np.array(problem.constraint_jacobian(X)[0]),
    )


def weighted_hvp(problem, x, w, lam, delta, v):
    if not (0.0 <= delta < 1.0):
        raise InvalidInputError("delta must lie in [0, 1)")
    X = _rows(x, problem.N)
    W = _rows(w, problem.P, "w")
    L = _rows(lam, problem.M, "lambda")
    V = _rows(v, problem.N, "v")
    return problem.weighted_hvp(X, W, L, delta, V)[0]


def dual_value(problem, lam, w):
    """``d(lam, w) = inf_x w^T f(x) + lam^T g(x)``."""
    L = _rows(lam, problem.M, "lambda")
    W = _rows(w, problem.P, "w")
    if np.any(L < 0):
        raise InvalidInputError("dual multipliers must be nonnegative")
    return float(problem.dual(L, W)[0])


def closed_form_reference(problem, w):
    """Exact ``(x*, lam*)`` for problems with a known solution, else ``None``."""
    ref = getattr(problem, "reference", None)
    if ref is None:
        return None
    return ref(np.asarray(w, dtype=float))
