"""KKT-residual training of a primal and a dual network.

For a batch of weights ``W`` the primal net proposes feasible points ``X`` and
the dual net nonnegative multipliers ``L``.  Per sample the loss is

    |(1 - delta) s Jf(x)^T w + 2 delta x + Jg(x)^T lam|^2
        + eta * sum_j (lam_j g_j(x))^2 [g_j(x) < -cs_tol]

where ``s`` is the problem's objective scale.  Its gradient needs the
weighted Hessian-vector product of the Lagrangian, supplied by the problem.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, DivergenceError, InvalidInputError
from .network import Architecture, Params, forward, init_params, vjp_params

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "AdamState",
    "LossBreakdown",
    "TrainResult",
    "sample_scalarizations",
    "training_weights",
    "kkt_loss",
    "batch_kkt",
    "cs_mask",
    "kkt_loss_gradient",
    "duality_gap_loss",
    "calibrate_eta",
    "adam_step",
    "train",
]


@dataclass
class TrainConfig:
    epochs: int
    learning_rate: float = 1e-4
    eta: Union[float, str] = "auto"
    delta: Optional[float] = None  # None: use the problem's augmentation
    cs_tolerance: float = 5e-5
    K: int = 4
    sampling: Union[str, list] = "grid"
    seed: int = 0
    loss_kind: str = "kkt"

    def __post_init__(self):
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise ConfigError("epochs must be a nonnegative integer")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.eta != "auto" and not (isinstance(self.eta, (int, float)) and self.eta >= 0):
            raise ConfigError("eta must be a nonnegative number or 'auto'")
        if self.delta is not None and not (0.0 <= self.delta < 1.0):
            raise ConfigError("delta must lie in [0, 1)")
        if self.cs_tolerance < 0:
            raise ConfigError("cs_tolerance must be nonnegative")
        if self.K < 1:
            raise ConfigError("K must be at least 1")
        if isinstance(self.sampling, str) and self.sampling not in ("grid", "uniform"):
            raise ConfigError("sampling must be 'grid', 'uniform' or a list of weights")
        if self.loss_kind not in ("kkt", "duality_gap"):
            raise ConfigError("loss_kind must be 'kkt' or 'duality_gap'")


@dataclass
class LossBreakdown:
    total: float
    stationarity: float
    complementary_slackness: float


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: Params):
        return cls([np.zeros_like(a) for a in params.arrays()],
                   [np.zeros_like(a) for a in params.arrays()])


@dataclass
class TrainResult:
    primal: Params
    dual: Params
    history: list = field(default_factory=list)
    eta: float = 1.0
    weights: Optional[np.ndarray] = None


# -- scalarizations ---------------------------------------------------------------

def sample_scalarizations(P, K, mode="grid", floor=0.0, seed=0):
    """``K`` weights on the simplex, each component at least ``floor``."""
    if K < 1:
        raise InvalidInputError("K must be at least 1")
    if not (0.0 <= floor and floor * P < 1.0):
        raise InvalidInputError("floor must satisfy 0 <= floor * P < 1")
    if mode == "grid":
        if P != 2:
            raise InvalidInputError("grid sampling is only supported for P = 2")
        a = np.linspace(0.0, 1.0, K) if K > 1 else np.array([0.5])
        W = np.stack([a, 1.0 - a], axis=1)
        if floor > 0:
            W = np.clip(W, floor, 1.0 - floor)
    elif mode == "uniform":
        rng = np.random.default_rng(seed)
        E = rng.exponential(size=(K, P))
        W = E / E.sum(axis=1, keepdims=True)
        W = floor + (1.0 - P * floor) * W
    else:
        raise InvalidInputError(f"unknown sampling mode {mode!r}")
    return W


def training_weights(problem, config: TrainConfig):
    if isinstance(config.sampling, str):
        W = sample_scalarizations(problem.P, config.K, config.sampling, 0.0, config.seed + 2)
    else:
        W = np.asarray(config.sampling, dtype=float)
        if W.ndim != 2 or W.shape[1] != problem.P:
            raise ConfigError(f"explicit training weights must have {problem.P} columns")
        if np.any(W < 0) or np.max(np.abs(W.sum(axis=1) - 1)) > 1e-12:
            raise ConfigError("explicit training weights must lie on the simplex")
    return problem.clamp_weights(W)


# -- loss ---------------------------------------------------------------------------

# The primal projection lands its active constraint exactly on g = -tol; the
# margin keeps such points out of the slackness term despite roundoff.
CS_MARGIN = 1e-10


def cs_mask(G, cs_tol):
    """Constraints counted as inactive by the complementary-slackness term."""
    return G < -cs_tol - CS_MARGIN


def _residuals(problem, X, L, W, delta, cs_tol, scale):
    R = ((1.0 - delta) * scale) * problem.objective_vjp(X, W) + 2.0 * delta * X \
        + problem.constraint_vjp(X, L)
    G = problem.constraints(X)
    mask = cs_mask(G, cs_tol)
    S = np.where(mask, L * G, 0.0)
    return R, G, S


def batch_kkt(problem, X, L, W, delta=0.0, cs_tol=5e-5, scale=1.0):
    """Per-sample stationarity and complementary-slackness terms."""
    R, _, S = _residuals(problem, X, L, W, delta, cs_tol, scale)
    return np.sum(R * R, axis=1), np.sum(S * S, axis=1)


def kkt_loss(problem, x, lam, w, eta=1.0, delta=0.0, cs_tol=5e-5, scale=1.0) -> LossBreakdown:
    X, L, W = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (x, lam, w))
    if X.shape[1] != problem.N or L.shape[1] != problem.M or W.shape[1] != problem.P:
        raise InvalidInputError("dimension mismatch in kkt_loss")
    st, cs = batch_kkt(problem, X, L, W, delta, cs_tol, scale)
    st, cs = float(st.mean()), float(cs.mean())
    return LossBreakdown(st + eta * cs, st, cs)


def _kkt_cotangents(problem, X, L, W, eta, delta, cs_tol, scale):
    """Mean loss and its gradient with respect to ``X`` and ``L``."""
    K = X.shape[0]
    R, G, S = _residuals(problem, X, L, W, delta, cs_tol, scale)
    st = np.sum(R * R, axis=1)
    cs = np.sum(S * S, axis=1)
    gX = 2.0 * problem.weighted_hvp(X, W * scale, L, delta, R) \
        + (2.0 * eta) * problem.constraint_vjp(X, S * L)
    gL = 2.0 * problem.constraint_jvp(X, R) + (2.0 * eta) * S * G
    loss = LossBreakdown(float(st.mean() + eta * cs.mean()), float(st.mean()), float(cs.mean()))
    return loss, gX / K, gL / K


def duality_gap_loss(problem, x, lam, w, scale=1.0):
    """``w^T f(x) - d(lam, w)`` (on the scaled problem when ``scale != 1``)."""
    X, L, W = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (x, lam, w))
    gap = scale * (np.sum(W * problem.objectives(X), axis=1) - problem.dual(L / scale, W))
    return float(gap.mean())


def _gap_cotangents(problem, X, L, W, scale):
    K = X.shape[0]
    gap = scale * (np.sum(W * problem.objectives(X), axis=1) - problem.dual(L / scale, W))
    gX = scale * problem.objective_vjp(X, W)
    gL = -problem.dual_gradient(L / scale, W)
    val = float(gap.mean())
    return LossBreakdown(val, val, 0.0), gX / K, gL / K


def kkt_loss_gradient(problem, primal, dual, W, eta=1.0, delta=0.0, cs_tol=5e-5,
                      scale=1.0, loss_kind="kkt"):
    """Mean loss over the rows of ``W`` and its gradient with respect to the
    parameters of both networks.  ``primal`` / ``dual`` are
    ``(Architecture, Params)`` pairs.  Returns ``(loss, g_primal, g_dual)``."""
    (pa, pp), (da, dp) = primal, dual
    X, ptape = forward(pa, pp, W, problem)
    L, dtape = forward(da, dp, W, problem)
    if loss_kind == "kkt":
        loss, gX, gL = _kkt_cotangents(problem, X, L, W, eta, delta, cs_tol, scale)
    elif loss_kind == "duality_gap":
        loss, gX, gL = _gap_cotangents(problem, X, L, W, scale)
    else:
        raise ConfigError(f"unknown loss kind {loss_kind!r}")
    gp, _ = vjp_params(pa, pp, ptape, gX, problem)
    gd, _ = vjp_params(da, dp, dtape, gL, problem)
    return loss, gp, gd


def calibrate_eta(problem, primal, dual, W, delta=0.0, cs_tol=5e-5, scale=1.0):
    """Ratio of mean stationarity to mean complementary slackness at the
    given parameters; 1 when the latter vanishes."""
    X, _ = forward(*primal, W, problem)
    L, _ = forward(*dual, W, problem)
    st, cs = batch_kkt(problem, X, L, W, delta, cs_tol, scale)
    return eta_ratio(st.mean(), cs.mean())


def eta_ratio(st_mean, cs_mean):
    if cs_mean < 1e-12:
        return 1.0
    return float(st_mean / cs_mean)


# -- optimizer ----------------------------------------------------------------------

def adam_step(state: AdamState, params: Params, grads: Params, lr):
    arrays, garrays = params.arrays(), grads.arrays()
    for g in garrays:
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient at Adam step {state.t + 1}")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(arrays, garrays, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        mhat = m / (1.0 - b1**t)
        vhat = v / (1.0 - b2**t)
        new_p.append(p - lr * mhat / (np.sqrt(vhat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return Params.from_arrays(new_p), AdamState(new_m, new_v, t, b1, b2, state.eps)


# -- loop ---------------------------------------------------------------------------

def train(problem, primal_arch: Architecture, dual_arch: Architecture, config: TrainConfig,
          primal_params=None, dual_params=None, callback=None) -> TrainResult:
    """Full-batch Adam on the mean loss over the training weights.

    ``callback(epoch, loss, primal_params, dual_params)`` runs after every
    step with the updated parameters.
    """
    W = training_weights(problem, config)
    if primal_arch.input_dim != problem.P or dual_arch.input_dim != problem.P:
        raise ConfigError("network input width must equal the number of objectives")
    pp = init_params(primal_arch, config.seed) if primal_params is None else primal_params
    dp = init_params(dual_arch, config.seed + 1) if dual_params is None else dual_params
    pp.check(primal_arch)
    dp.check(dual_arch)
    delta = problem.augmentation if config.delta is None else float(config.delta)
    scale = float(problem.objective_scale)
    cs_tol = config.cs_tolerance

    if config.eta == "auto":
        eta = calibrate_eta(problem, (primal_arch, pp), (dual_arch, dp), W, delta, cs_tol, scale)
        log.info("calibrated eta = %.6g", eta)
    else:
        eta = float(config.eta)

    result = TrainResult(pp, dp, [], eta, W)
    sp, sd = AdamState.zeros(pp), AdamState.zeros(dp)
    for epoch in range(config.epochs):
        # overflow shows up as non-finite values, which are checked explicitly
        with np.errstate(over="ignore", invalid="ignore"):
            loss, gp, gd = kkt_loss_gradient(problem, (primal_arch, pp), (dual_arch, dp), W,
                                             eta, delta, cs_tol, scale, config.loss_kind)
        if not np.isfinite(loss.total):
            raise DivergenceError(f"non-finite loss at epoch {epoch}")
        pp, sp = adam_step(sp, pp, gp, config.learning_rate)
        dp, sd = adam_step(sd, dp, gd, config.learning_rate)
        result.history.append(loss)
        if callback is not None:
            callback(epoch, loss, pp, dp)
    result.primal, result.dual = pp, dp
    return result
