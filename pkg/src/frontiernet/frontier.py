"""Frontier evaluation, error bounds and baselines.

Given trained networks, every scalarization ``w`` yields a feasible point
``x(w)`` (an inner generator ``f(x(w))``) and a dual-feasible ``lam(w)`` (the
outer half-space ``{y : w^T y >= d(lam(w), w)}``).  The per-direction error
bound is ``eps(w) = w^T f(x(w)) - d(lam(w), w)``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidInputError,
    LPInfeasibleError,
    LPUnboundedError,
    UnboundedOuterError,
)
from .linalg import LinearProgram, simplex_solve
from .network import forward, project_primal
from .problems import dual_value

__all__ = [
    "FrontierPoint",
    "InnerApproximation",
    "OuterApproximation",
    "ErrorStatistics",
    "epsilon_bound",
    "evaluate_frontier",
    "realized_epsilon_2d",
    "realized_epsilons",
    "error_stats",
    "baseline_random",
    "baseline_fixed",
    "sandwich_gap",
    "default_threads",
]


@dataclass
class FrontierPoint:
    w: np.ndarray
    x: np.ndarray
    f: np.ndarray
    lam: np.ndarray
    dual: float
    epsilon: float


@dataclass
class InnerApproximation:
    points: np.ndarray  # rows are objective vectors

    @classmethod
    def from_points(cls, pts):
        return cls(np.array([p.f for p in pts]))

    def support(self, w):
        return float(np.min(self.points @ np.asarray(w, dtype=float)))


@dataclass
class OuterApproximation:
    weights: np.ndarray
    offsets: np.ndarray  # half-space k is {y : weights[k] @ y >= offsets[k]}

    @classmethod
    def from_points(cls, pts):
        return cls(np.array([p.w for p in pts]), np.array([p.dual for p in pts]))

    def contains(self, y, tol=0.0):
        return bool(np.all(self.weights @ np.asarray(y, dtype=float) >= self.offsets - tol))


@dataclass
class ErrorStatistics:
    mean: float
    median: float
    q25: float
    q75: float
    ci95_low: float
    ci95_high: float
    max: float

    def as_dict(self):
        return dict(self.__dict__)


def default_threads():
    env = os.environ.get("CVOP_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InvalidInputError(f"CVOP_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise InvalidInputError("CVOP_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1


def _chunked(fn, n_rows, threads, min_chunk=64):
    """Apply ``fn(slice)`` over row chunks, concatenating results in order."""
    if threads <= 1 or n_rows <= min_chunk:
        return fn(slice(0, n_rows))
    bounds = np.linspace(0, n_rows, min(threads, -(-n_rows // min_chunk)) + 1).astype(int)
    slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(fn, slices))
    return np.concatenate(parts)


def epsilon_bound(problem, x, lam, w):
    w = np.asarray(w, dtype=float)
    f = problem.objectives(np.asarray(x, dtype=float)[None, :])[0]
    return float(w @ f - dual_value(problem, lam, w))


def evaluate_frontier(problem, primal, dual, test_ws, threads=1):
    """One :class:`FrontierPoint` per test weight, in input order.

    ``primal`` and ``dual`` are ``(Architecture, Params)`` pairs.  Dual
    networks are trained on the scaled objective, so their multipliers are
    divided by the problem's objective scale here.
    """
    W = np.asarray(test_ws, dtype=float)
    if W.size == 0:
        return []
    W = np.atleast_2d(W)
    if W.shape[1] != problem.P:
        raise InvalidInputError(f"test weights must have {problem.P} columns")
    X, _ = forward(*primal, W, problem)
    L, _ = forward(*dual, W, problem)
    L = L / problem.objective_scale
    F = problem.objectives(X)
    D = _chunked(lambda s: problem.dual(L[s], W[s]), W.shape[0], threads)
    eps = np.sum(W * F, axis=1) - D
    return [FrontierPoint(W[k], X[k], F[k], L[k], float(D[k]), float(eps[k]))
            for k in range(W.shape[0])]


def _outer_support(outer: OuterApproximation, w):
    """``min w^T y`` over the half-space intersection, via the dual LP
    ``max d^T mu  s.t.  sum_k mu_k w_k = w,  mu >= 0``."""
    K = outer.weights.shape[0]
    lp = LinearProgram(-outer.offsets, outer.weights.T, w, np.zeros(K))
    try:
        mu = simplex_solve(lp)
    except LPInfeasibleError as exc:
        raise UnboundedOuterError(
            f"outer approximation is unbounded in direction {np.round(w, 6).tolist()}"
        ) from exc
    except LPUnboundedError as exc:
        raise UnboundedOuterError("outer approximation is empty") from exc
    return float(outer.offsets @ mu)


def realized_epsilon_2d(inner: InnerApproximation, outer: OuterApproximation, w):
    """Support gap between the inner and outer sets in direction ``w`` (P = 2)."""
    w = np.asarray(w, dtype=float)
    if w.shape != (2,) or inner.points.shape[1] != 2 or outer.weights.shape[1] != 2:
        raise InvalidInputError("realized errors are only available for P = 2")
    return inner.support(w) - _outer_support(outer, w)


def realized_epsilons(points, threads=1):
    inner = InnerApproximation.from_points(points)
    outer = OuterApproximation.from_points(points)
    W = np.array([p.w for p in points])
    return _chunked(lambda s: np.array([realized_epsilon_2d(inner, outer, w) for w in W[s]]),
                    W.shape[0], threads, min_chunk=32)


def error_stats(epsilons) -> ErrorStatistics:
    e = np.asarray(epsilons, dtype=float).ravel()
    if e.size == 0:
        raise InvalidInputError("error_stats needs at least one value")
    q25, med, q75 = np.quantile(e, [0.25, 0.5, 0.75])
    lo = np.quantile(e, 0.025, method="lower")
    hi = np.quantile(e, 0.975, method="higher")
    return ErrorStatistics(float(e.mean()), float(med), float(q25), float(q75),
                           float(lo), float(hi), float(e.max()))


def baseline_fixed(problem, test_ws, x=None):
    """Errors of a single feasible point (default: the Slater point) paired
    with zero multipliers."""
    W = np.atleast_2d(np.asarray(test_ws, dtype=float))
    x = problem.slater_point if x is None else np.asarray(x, dtype=float)
    if np.any(problem.constraints(x[None, :]) > 0):
        raise InvalidInputError("baseline point is infeasible")
    L = np.zeros((W.shape[0], problem.M))
    return W @ problem.objectives(x[None, :])[0] - problem.dual(L, W)


def baseline_random(problem, seed, test_ws, threads=1):
    """Errors of random feasible points (one per weight, projected from the
    problem's sampling box) paired with zero multipliers."""
    W = np.atleast_2d(np.asarray(test_ws, dtype=float))
    if W.shape[1] != problem.P:
        raise InvalidInputError(f"test weights must have {problem.P} columns")
    rng = np.random.default_rng(seed)
    lo, hi = problem.sampling_box()
    Z = lo + (hi - lo) * rng.random((W.shape[0], problem.N))
    X, _, _ = project_primal(Z, problem, 0.0)
    L = np.zeros((W.shape[0], problem.M))
    D = _chunked(lambda s: problem.dual(L[s], W[s]), W.shape[0], threads)
    return np.sum(W * problem.objectives(X), axis=1) - D


def sandwich_gap(points):
    """``min over (w, w') of w'^T f(x(w)) - d(lam(w'), w')``; nonnegative
    when every inner generator lies in every outer half-space."""
    F = np.array([p.f for p in points])
    W = np.array([p.w for p in points])
    D = np.array([p.dual for p in points])
    return float(np.min(F @ W.T - D[None, :]))
