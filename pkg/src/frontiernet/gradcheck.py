"""Finite-difference checks of the analytic gradients.

Directional central differences are compared against ``kkt_loss_gradient``
and ``vjp_params`` on small random networks.  Piecewise terminals (ReLU,
projections, the slackness mask) make the loss non-smooth, so a draw whose
perturbed evaluations change any switching pattern is skipped rather than
counted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import dual_architecture, forward, init_params, primal_architecture, vjp_params
from .training import cs_mask, kkt_loss_gradient

__all__ = ["GradcheckReport", "small_networks", "gradient_check"]


@dataclass
class GradcheckReport:
    max_rel_error: float
    loss_checks: int
    vjp_checks: int
    skipped: int


def small_networks(problem, rng, seed):
    """Random (not just freshly initialized) small primal/dual networks."""
    pa = primal_architecture(problem, (5, 4), pre_relu=problem.name == "mean_variance")
    da = dual_architecture(problem, (4,), terminal=None if problem.name == "lvop" else "softplus")
    out = []
    for arch, s in ((pa, seed), (da, seed + 1)):
        p = init_params(arch, s)
        flat = p.flat()
        out.append((arch, p.with_flat(flat * rng.uniform(0.5, 3) + 0.3 * rng.standard_normal(flat.size))))
    return out[0], out[1]


def _signature(problem, primal, dual, W, cs_tol):
    X, pt = forward(*primal, W, problem)
    L, dt = forward(*dual, W, problem)
    sig = [pt.extra.get("active"), dt.extra.get("active"), cs_mask(problem.constraints(X), cs_tol)]
    if primal[0].pre_relu:
        sig.append(pt.pre > 0)
    if dual[0].terminal == "relu":
        sig.append(dt.z > 0)
    return [np.asarray(s) for s in sig if s is not None]


def _same(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def _rel(fd, an):
    return float(np.linalg.norm(fd - an) / max(np.linalg.norm(fd), 1e-8))


def _loss_error(problem, primal, dual, W, eta, delta, cs_tol, rng, h, n_dir):
    (pa, pp), (da, dp) = primal, dual
    scale = problem.objective_scale
    _, gp, gd = kkt_loss_gradient(problem, primal, dual, W, eta, delta, cs_tol, scale)
    theta = np.concatenate([pp.flat(), dp.flat()])
    g = np.concatenate([gp.flat(), gd.flat()])
    n1 = pp.flat().size
    sig = _signature(problem, primal, dual, W, cs_tol)
    fd, an = [], []
    for _ in range(n_dir):
        v = rng.standard_normal(theta.size)
        vals = []
        for s in (1.0, -1.0):
            th = theta + s * h * v
            pr, du = (pa, pp.with_flat(th[:n1])), (da, dp.with_flat(th[n1:]))
            if not _same(sig, _signature(problem, pr, du, W, cs_tol)):
                return None
            vals.append(kkt_loss_gradient(problem, pr, du, W, eta, delta, cs_tol, scale)[0].total)
        fd.append((vals[0] - vals[1]) / (2 * h))
        an.append(g @ v)
    return _rel(np.array(fd), np.array(an))


def _vjp_error(problem, net, W, rng, h, n_dir):
    arch, params = net
    Y, tape = forward(arch, params, W, problem)
    C = rng.standard_normal(Y.shape)
    gparams, gW = vjp_params(arch, params, tape, C, problem)
    theta, g = params.flat(), gparams.flat()

    def sig_of(p, Wx):
        t = forward(arch, p, Wx, problem)[1]
        parts = [t.extra.get("active"), t.extra.get("empty")]
        if arch.pre_relu:
            parts.append(t.pre > 0)
        if arch.terminal == "relu":
            parts.append(t.z > 0)
        return [np.asarray(s) for s in parts if s is not None]

    sig = sig_of(params, W)
    fd, an = [], []
    for _ in range(n_dir):
        v = rng.standard_normal(theta.size)
        u = rng.standard_normal(W.shape)
        vals = []
        for s in (1.0, -1.0):
            p = params.with_flat(theta + s * h * v)
            Wx = W + s * h * u
            if not _same(sig, sig_of(p, Wx)):
                return None
            vals.append(np.sum(C * forward(arch, p, Wx, problem)[0]))
        fd.append((vals[0] - vals[1]) / (2 * h))
        an.append(g @ v + np.sum(gW * u))
    return _rel(np.array(fd), np.array(an))


def gradient_check(problem, seed=0, n_configs=20, h=1e-5, n_dir=4) -> GradcheckReport:
    """Largest relative error over ``n_configs`` random small configurations."""
    rng = np.random.default_rng(seed)
    worst, n_loss, n_vjp, skipped = 0.0, 0, 0, 0
    for trial in range(n_configs):
        primal, dual = small_networks(problem, rng, seed * 1000 + 2 * trial)
        K = int(rng.integers(1, 5))
        W = problem.clamp_weights(rng.dirichlet(np.ones(problem.P), K))
        eta = float(rng.uniform(0.1, 10))
        delta = problem.augmentation
        err = _loss_error(problem, primal, dual, W, eta, delta, 5e-5, rng, h, n_dir)
        if err is None:
            skipped += 1
        else:
            worst, n_loss = max(worst, err), n_loss + 1
        for net in (primal, dual):
            err = _vjp_error(problem, net, W, rng, h, n_dir)
            if err is None:
                skipped += 1
            else:
                worst, n_vjp = max(worst, err), n_vjp + 1
    return GradcheckReport(worst, n_loss, n_vjp, skipped)
