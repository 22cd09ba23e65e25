"""Dense tanh networks with feasibility-enforcing output layers.

A network maps a batch of scalarization weights ``W`` (K x P) to primal
points or dual multipliers.  Hidden layers are ``tanh(W_l a + b_l)``; the last
affine layer feeds a terminal activation, which for the primal network is
usually the projection toward the Slater point and for the dual network a
ReLU / SoftPlus or the null-space projection used by linear problems.

Everything is batched over rows and differentiated by hand in
:func:`vjp_params`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .errors import ConfigError, InvalidInputError, ShapeError

__all__ = [
    "TERMINALS",
    "Architecture",
    "Params",
    "Tape",
    "init_params",
    "forward",
    "vjp_params",
    "project_primal",
    "project_dual_nullspace",
    "primal_architecture",
    "dual_architecture",
]

TERMINALS = (
    "identity",
    "relu",
    "softplus",
    "normalized_relu",
    "primal_projection",
    "dual_nullspace",
)

DEFAULT_TOL = 5e-5


@dataclass(frozen=True)
class Architecture:
    """Layer widths plus the terminal activation.

    ``output_dim`` is the width of the last affine layer.  ``replication``,
    when given, lists for every decision variable the network output it
    copies, so a net with few outputs can drive many variables.
    """

    input_dim: int
    hidden_widths: tuple
    output_dim: int
    terminal: str = "identity"
    tol: float = DEFAULT_TOL
    pre_relu: bool = False
    centered: bool = False
    replication: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(h) for h in self.hidden_widths))
        if self.replication is not None:
            object.__setattr__(self, "replication", tuple(int(i) for i in self.replication))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigError("input_dim and output_dim must be at least 1")
        if len(self.hidden_widths) < 1 or min(self.hidden_widths) < 1:
            raise ConfigError("need at least one hidden layer, all widths >= 1")
        if self.terminal not in TERMINALS:
            raise ConfigError(f"unknown terminal {self.terminal!r}; choose from {', '.join(TERMINALS)}")
        if self.tol < 0:
            raise ConfigError("projection tolerance must be nonnegative")
        if self.replication is not None:
            rep = np.asarray(self.replication)
            if rep.min() < 0 or rep.max() >= self.output_dim:
                raise ConfigError("replication indices out of range")
            if len(set(self.replication)) != self.output_dim:
                raise ConfigError("replication must use every network output")

    @property
    def layer_widths(self):
        return (self.input_dim,) + self.hidden_widths + (self.output_dim,)

    @property
    def decision_dim(self):
        """Width after replication (before the terminal)."""
        return self.output_dim if self.replication is None else len(self.replication)

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden_widths": list(self.hidden_widths),
            "output_dim": self.output_dim,
            "terminal": self.terminal,
            "tol": self.tol,
            "pre_relu": self.pre_relu,
            "centered": self.centered,
            "replication": None if self.replication is None else list(self.replication),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad architecture: {exc}") from None


@dataclass
class Params:
    weights: list
    biases: list

    def arrays(self):
        out = []
        for Wl, bl in zip(self.weights, self.biases):
            out += [Wl, bl]
        return out

    @classmethod
    def from_arrays(cls, arrays):
        return cls(list(arrays[0::2]), list(arrays[1::2]))

    def copy(self):
        return Params([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self):
        return Params([np.zeros_like(w) for w in self.weights],
                      [np.zeros_like(b) for b in self.biases])

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec):
        out, pos = [], 0
        for a in self.arrays():
            out.append(np.asarray(vec[pos:pos + a.size], dtype=float).reshape(a.shape))
            pos += a.size
        return Params.from_arrays(out)

    def check(self, arch: Architecture):
        widths = arch.layer_widths
        if len(self.weights) != len(widths) - 1 or len(self.biases) != len(widths) - 1:
            raise ShapeError("parameter layer count does not match the architecture")
        for l, (Wl, bl) in enumerate(zip(self.weights, self.biases)):
            if Wl.shape != (widths[l + 1], widths[l]) or bl.shape != (widths[l + 1],):
                raise ShapeError(
                    f"layer {l}: weight {Wl.shape} / bias {bl.shape}, "
                    f"expected ({widths[l + 1]}, {widths[l]}) / ({widths[l + 1]},)"
                )


@dataclass
class Tape:
    inputs: np.ndarray
    activations: list  # tanh outputs of the hidden layers
    raw: np.ndarray  # last affine layer
    pre: np.ndarray  # after replication and centering, before pre-ReLU
    z: np.ndarray  # terminal input
    output: np.ndarray
    extra: dict = field(default_factory=dict)


def init_params(arch: Architecture, seed) -> Params:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    widths = arch.layer_widths
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Params(weights, biases)


# -- projections ----------------------------------------------------------------

def project_primal(Z, problem, tol=DEFAULT_TOL):
    """Pull each row of ``Z`` toward the Slater point until ``g <= -tol``
    holds on every constraint that was within ``tol`` of being violated.

    Returns ``(X, t, active)`` with ``active = -1`` where ``t = 0``.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    xbar = problem.slater_point
    gbar = problem.constraints(xbar[None, :])[0]
    if not tol < -gbar.max():
        raise InvalidInputError(
            f"projection tolerance {tol} must be below the Slater margin {-gbar.max():.3e}"
        )
    G = problem.constraints(Z)
    near = G >= -tol
    ratio = np.where(near, (G + tol) / np.where(near, G - gbar, 1.0), -np.inf)
    active = np.argmax(ratio, axis=1)
    t = ratio[np.arange(Z.shape[0]), active]
    hit = t > 0
    t = np.where(hit, t, 0.0)
    active = np.where(hit, active, -1)
    X = (1.0 - t)[:, None] * Z + t[:, None] * xbar
    return X, t, active


def _project_primal_vjp(C, Z, X, t, active, problem, tol):
    xbar = problem.slater_point
    out = (1.0 - t)[:, None] * C
    rows = np.flatnonzero(active >= 0)
    if rows.size:
        gbar = problem.constraints(xbar[None, :])[0]
        j = active[rows]
        Zr = Z[rows]
        gj = problem.constraints(Zr)[np.arange(rows.size), j]
        dt = (-gbar[j] - tol) / (gj - gbar[j]) ** 2
        scale = np.sum(C[rows] * (xbar - Zr), axis=1) * dt
        L = np.zeros((rows.size, problem.M))
        L[np.arange(rows.size), j] = scale
        out[rows] += problem.constraint_vjp(Zr, L)
    return out


def project_dual_nullspace(Z, basis, lam_bar):
    """``lam = (1 - t) B z + lam_bar`` with the smallest ``t`` keeping
    ``lam >= 0``.  Returns ``(lam, t, active)``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    lam_bar = np.atleast_2d(np.asarray(lam_bar, dtype=float))
    if np.any(lam_bar <= 0):
        raise InvalidInputError("feasible dual point must be strictly positive")
    U = Z @ basis.T
    Zh = U + lam_bar
    neg = np.maximum(-Zh, 0.0)
    ratio = neg / (neg + lam_bar)
    active = np.argmax(ratio, axis=1)
    t = ratio[np.arange(Z.shape[0]), active]
    active = np.where(t > 0, active, -1)
    lam = (1.0 - t)[:, None] * U + lam_bar
    # the active coordinate is zero analytically; clip roundoff there only
    rows = np.flatnonzero(active >= 0)
    lam[rows, active[rows]] = np.maximum(lam[rows, active[rows]], 0.0)
    return lam, t, active


# -- forward / backward ---------------------------------------------------------

def _replication_matrix(arch):
    R = np.zeros((len(arch.replication), arch.output_dim))
    R[np.arange(len(arch.replication)), arch.replication] = 1.0
    return R


def forward(arch: Architecture, params: Params, W, problem=None):
    """Evaluate the network on a batch of weights (rows of ``W``)."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[1] != arch.input_dim:
        raise ShapeError(f"weights have {W.shape[1]} columns, network expects {arch.input_dim}")
    a = W
    acts = []
    n_layers = len(params.weights)
    for l in range(n_layers - 1):
        a = np.tanh(a @ params.weights[l].T + params.biases[l])
        acts.append(a)
    raw = a @ params.weights[-1].T + params.biases[-1]

    pre = raw if arch.replication is None else raw[:, list(arch.replication)]
    if arch.centered:
        pre = pre + problem.slater_point
    z = np.maximum(pre, 0.0) if arch.pre_relu else pre

    extra = {}
    term = arch.terminal
    if term == "identity":
        out = z
    elif term == "relu":
        out = np.maximum(z, 0.0)
    elif term == "softplus":
        out = np.logaddexp(0.0, z)
    elif term == "normalized_relu":
        p = np.maximum(z, 0.0)
        s = p.sum(axis=1, keepdims=True)
        empty = s[:, 0] <= 0
        out = p / np.where(s > 0, s, 1.0)
        if np.any(empty):
            if problem is None:
                raise ConfigError("normalized_relu fallback needs a problem")
            out[empty] = problem.slater_point
        extra.update(sum=s[:, 0], empty=empty)
    elif term == "primal_projection":
        if problem is None:
            raise ConfigError("primal_projection needs a problem")
        out, t, active = project_primal(z, problem, arch.tol)
        extra.update(t=t, active=active)
    else:  # dual_nullspace
        basis = getattr(problem, "dual_basis", None)
        if basis is None:
            raise ConfigError("dual_nullspace needs a problem with a dual null-space basis")
        lam_bar = problem.strict_dual_points(W)
        out, t, active = project_dual_nullspace(z, basis, lam_bar)
        extra.update(t=t, active=active, lam_bar=lam_bar, U=z @ basis.T)
    return out, Tape(W, acts, raw, pre, z, out, extra)


def _terminal_vjp(arch, tape, C, problem):
    """Cotangent on the output -> (cotangent on z, cotangent on W)."""
    z, ex = tape.z, tape.extra
    cW = None
    term = arch.terminal
    if term == "identity":
        cz = C
    elif term == "relu":
        cz = C * (z > 0)
    elif term == "softplus":
        cz = C * expit(z)
    elif term == "normalized_relu":
        s = np.where(ex["empty"], 1.0, ex["sum"])[:, None]
        x = tape.output
        cz = (C - np.sum(C * x, axis=1, keepdims=True)) / s * (z > 0)
        cz[ex["empty"]] = 0.0
    elif term == "primal_projection":
        cz = _project_primal_vjp(C, z, tape.output, ex["t"], ex["active"], problem, arch.tol)
    else:
        basis, t, active = problem.dual_basis, ex["t"], ex["active"]
        U, lam_bar = ex["U"], ex["lam_bar"]
        cU = (1.0 - t)[:, None] * C
        cbar = C.copy()
        rows = np.flatnonzero(active >= 0)
        if rows.size:
            j = active[rows]
            lb = lam_bar[rows, j]
            zh = U[rows, j] + lb
            cu = np.sum(C[rows] * U[rows], axis=1)
            cU[rows, j] += cu * lb / (lb - zh) ** 2
            # lam_bar enters t directly and through zh: dt/dlam_bar_j = -1 / (lam_bar_j - zh_j)
            cbar[rows, j] += cu / (lb - zh)
        cz = cU @ basis
        V = problem.strict_dual_points(np.eye(arch.input_dim))
        cW = cbar @ V.T
    return cz, cW


def vjp_params(arch: Architecture, params: Params, tape: Tape, cotangent, problem=None):
    """Gradient of ``sum(cotangent * output)`` with respect to the
    parameters and to the input weights.  Returns ``(Params, input_grad)``."""
    C = np.atleast_2d(np.asarray(cotangent, dtype=float))
    if C.shape != tape.output.shape:
        raise ShapeError(f"cotangent shape {C.shape} does not match output {tape.output.shape}")
    cz, cW_term = _terminal_vjp(arch, tape, C, problem)
    if arch.pre_relu:
        cz = cz * (tape.pre > 0)
    c = cz if arch.replication is None else cz @ _replication_matrix(arch)

    n_layers = len(params.weights)
    gW = [None] * n_layers
    gb = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        a_prev = tape.activations[l - 1] if l > 0 else tape.inputs
        gW[l] = c.T @ a_prev
        gb[l] = c.sum(axis=0)
        c = c @ params.weights[l]
        if l > 0:
            c = c * (1.0 - tape.activations[l - 1] ** 2)
    if cW_term is not None:
        c = c + cW_term
    return Params(gW, gb), c


# -- helpers for the built-ins ------------------------------------------------------

def replicate_last(n_free, N):
    """Outputs ``0..n_free-1`` map to themselves, output ``n_free`` to the rest."""
    return tuple(range(n_free)) + (n_free,) * (N - n_free)


def primal_architecture(problem, hidden_widths, terminal="primal_projection", tol=DEFAULT_TOL,
                        pre_relu=False, replication=None, centered=None):
    if centered is None:
        centered = bool(problem.centered)
    out_dim = problem.N if replication is None else max(replication) + 1
    if replication is not None and len(replication) != problem.N:
        raise ConfigError(f"replication must have length N = {problem.N}")
    return Architecture(problem.P, tuple(hidden_widths), out_dim, terminal, tol,
                        pre_relu, centered, None if replication is None else tuple(replication))


def dual_architecture(problem, hidden_widths, terminal=None):
    if terminal is None:
        terminal = "dual_nullspace" if hasattr(problem, "dual_basis") else "relu"
    out_dim = problem.dual_basis.shape[1] if terminal == "dual_nullspace" else problem.M
    return Architecture(problem.P, tuple(hidden_widths), out_dim, terminal)
