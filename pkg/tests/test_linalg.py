import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frontiernet.errors import (
    InfeasibleSystemError,
    InvalidInputError,
    LPInfeasibleError,
    LPUnboundedError,
)
from frontiernet.linalg import LinearProgram, null_space_basis, particular_solution, simplex_solve

LVOP_A = np.array([[-2.0, -1.0], [-1.0, -2.0], [1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])


def kernel_by_gram_schmidt(A, rng, tol=1e-9):
    """Independent kernel oracle: project random vectors onto null(A) with
    the normal equations, then orthonormalize by classical Gram-Schmidt."""
    n = A.shape[1]
    proj = np.eye(n) - A.T @ np.linalg.pinv(A @ A.T) @ A
    basis = []
    for _ in range(3 * n):
        v = proj @ rng.standard_normal(n)
        for q in basis:
            v -= (q @ v) * q
        nv = np.linalg.norm(v)
        if nv > tol:
            basis.append(v / nv)
    return np.array(basis).T.reshape(n, len(basis))


def test_null_space_of_row_of_ones():
    B = null_space_basis(np.array([[1.0, 1.0]]))
    assert B.shape == (2, 1)
    assert np.allclose(np.abs(B[:, 0]), [1 / np.sqrt(2)] * 2)
    assert B[0, 0] == pytest.approx(-B[1, 0])


def test_null_space_of_identity_is_empty():
    assert null_space_basis(np.eye(2)).shape == (2, 0)


def test_null_space_of_lvop_transpose():
    At = LVOP_A.T
    B = null_space_basis(At)
    assert B.shape == (5, 3)
    assert np.max(np.abs(At @ B)) <= 1e-10
    assert np.max(np.abs(B.T @ B - np.eye(3))) <= 1e-12
    oracle = kernel_by_gram_schmidt(At, np.random.default_rng(0))
    assert oracle.shape[1] == 3
    # same subspace: equal orthogonal projectors
    assert np.allclose(B @ B.T, oracle @ oracle.T, atol=1e-10)


def test_null_space_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        null_space_basis(np.array([[1.0, np.nan]]))


def test_null_space_rank_deficient():
    A = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
    B = null_space_basis(A)
    assert B.shape == (3, 2)
    assert np.max(np.abs(A @ B)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 7), st.integers(0, 2**31 - 1))
def test_null_space_random_full_rank(n, m_off, seed):
    m = max(1, n - m_off)
    A = np.random.default_rng(seed).standard_normal((m, n))
    B = null_space_basis(A)
    assert B.shape == (n, n - m)
    if B.shape[1]:
        assert np.max(np.abs(A @ B)) <= 1e-9
        assert np.max(np.abs(B.T @ B - np.eye(B.shape[1]))) <= 1e-10


def test_particular_solution_examples():
    assert np.allclose(particular_solution([[1.0, 1.0]], [2.0]), [1.0, 1.0])
    assert np.allclose(particular_solution(np.eye(2), [3.0, 4.0]), [3.0, 4.0])


def test_particular_solution_self_financing_shape():
    # self-financing constraints of a two-period binomial model (3 x 6)
    S0, Su, Sd = 1.0, 1.25, 0.8
    A = np.array([
        [1.0, S0, 0, 0, 0, 0],
        [1.0, Su, -1.0, -Su, 0, 0],
        [1.0, Sd, 0, 0, -1.0, -Sd],
    ])
    b = np.array([10.0, 0.0, 0.0])
    x = particular_solution(A, b)
    assert np.max(np.abs(A @ x - b)) <= 1e-9


def test_particular_solution_inconsistent():
    with pytest.raises(InfeasibleSystemError) as exc:
        particular_solution([[1.0, 1.0], [1.0, 1.0]], [1.0, 2.0])
    assert exc.value.residual > 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_particular_solution_consistent_random(m, n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    b = A @ rng.standard_normal(n)
    x = particular_solution(A, b)
    assert np.max(np.abs(A @ x - b)) <= 1e-9


def test_simplex_trivial_examples():
    x = simplex_solve(LinearProgram([1.0, 1.0], [[1.0, 1.0]], [1.0], [0.0, 0.0]))
    assert x.sum() == pytest.approx(1.0)
    assert np.all(x >= 0)
    x = simplex_solve(LinearProgram([1.0], [[1.0]], [2.0], [0.0]))
    assert x == pytest.approx([2.0])


def test_simplex_strictly_feasible_dual_point_lvop():
    w = np.array([0.5, 0.5])
    eps = 5e-3
    lp = LinearProgram(np.ones(5), LVOP_A.T, -w, np.full(5, eps))
    lam = simplex_solve(lp)
    assert np.max(np.abs(LVOP_A.T @ lam + w)) <= 1e-9
    assert np.all(lam >= eps - 1e-12)
    # (1/6, 1/6, s, s, s) is feasible for all s; with s = eps it has cost 1/3 + 3 eps
    assert lam.sum() <= 1 / 3 + 3 * eps + 1e-9


def test_simplex_infeasible_reports_residual():
    lp = LinearProgram([1.0, 1.0], [[1.0, 1.0]], [-1.0], [0.0, 0.0])
    with pytest.raises(LPInfeasibleError) as exc:
        simplex_solve(lp)
    assert exc.value.residual == pytest.approx(1.0)


def test_simplex_unbounded():
    lp = LinearProgram([-1.0, 0.0], [[1.0, -1.0]], [0.0], [0.0, 0.0])
    with pytest.raises(LPUnboundedError):
        simplex_solve(lp)


def test_simplex_redundant_rows():
    A = np.array([[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]])
    x = simplex_solve(LinearProgram([1.0, 2.0, 3.0], A, [1.0, 2.0], np.zeros(3)))
    assert x == pytest.approx([1.0, 0.0, 0.0])


def brute_force_lp(A, b, c, lb):
    """Enumerate every basis of the standard-form LP and keep the best
    feasible basic solution."""
    m, n = A.shape
    rhs = b - A @ lb
    best = np.inf
    for cols in itertools.combinations(range(n), m):
        B = A[:, cols]
        if abs(np.linalg.det(B)) < 1e-10:
            continue
        yb = np.linalg.solve(B, rhs)
        if np.all(yb >= -1e-9):
            y = np.zeros(n)
            y[list(cols)] = yb
            best = min(best, c @ (y + lb))
    return best


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 4), st.integers(0, 4), st.integers(0, 2**31 - 1))
def test_simplex_matches_vertex_enumeration(m, extra, seed):
    n = min(8, m + 1 + extra)
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    lb = rng.uniform(-1, 1, n)
    x0 = lb + rng.uniform(0, 2, n)
    b = A @ x0
    # c - A^T y >= 0 keeps the LP bounded below
    c = A.T @ rng.standard_normal(m) + rng.uniform(0.1, 1.0, n)
    x = simplex_solve(LinearProgram(c, A, b, lb))
    assert np.max(np.abs(A @ x - b)) <= 1e-9
    assert np.all(x >= lb - 1e-12)
    assert c @ x == pytest.approx(brute_force_lp(A, b, c, lb), abs=1e-8)
