import numpy as np
import pytest

from frontiernet.problems import make_builtin


def small_mean_variance(S=4, seed=3):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((S, S))
    C = F @ F.T / S + 0.5 * np.eye(S)
    r = rng.uniform(0.2, 1.0, S)
    return make_builtin("mean_variance", r_bar=r, C=C)


def builtin_zoo():
    """One small instance of every built-in."""
    return {
        "box_biobjective": make_builtin("box_biobjective", N=3),
        "test_instance_4": make_builtin("test_instance_4", P=3, N=5),
        "hyperball": make_builtin("hyperball", N=3, eps=0.01),
        "mean_variance": small_mean_variance(),
        "lvop": make_builtin("lvop"),
    }


@pytest.fixture(params=list(builtin_zoo()))
def any_problem(request):
    return builtin_zoo()[request.param]


def bisect_feasible(problem, z, iters=80):
    """Pull ``z`` toward the Slater point by bisection until g <= 0.  Kept
    independent of the network projection so it can serve as an oracle."""
    xbar = problem.slater_point
    g = problem.constraints(z[None, :])[0]
    if np.all(g <= 0):
        return z.copy(), 0.0
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        x = (1 - mid) * z + mid * xbar
        if np.all(problem.constraints(x[None, :])[0] <= 0):
            hi = mid
        else:
            lo = mid
    return (1 - hi) * z + hi * xbar, hi


def random_simplex(rng, P, K=None):
    E = rng.exponential(size=(K or 1, P))
    W = E / E.sum(axis=1, keepdims=True)
    return W if K else W[0]


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
