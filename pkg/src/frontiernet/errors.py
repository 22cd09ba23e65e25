"""Exception hierarchy.

Everything raised on purpose by this package derives from ``FrontierError``.
``NumericalError`` subclasses mark failures of the numerics themselves
(divergence, infeasible LPs, ...) as opposed to bad input; the CLI maps the
two families to different exit codes.
"""


class FrontierError(Exception):
    """Base class for all package errors."""


class InvalidInputError(FrontierError, ValueError):
    """Non-finite, mis-shaped or otherwise invalid arguments."""


class ShapeError(InvalidInputError):
    """Array dimensions do not match the architecture or problem."""


class ConfigError(InvalidInputError):
    """A configuration document failed to parse or validate."""


class CheckpointError(FrontierError):
    """A checkpoint file is corrupt or has the wrong format version."""


class NumericalError(FrontierError):
    """Base class for failures of a numerical procedure."""


class InfeasibleSystemError(NumericalError):
    """A linear system ``A x = b`` has no solution within tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class LPInfeasibleError(NumericalError):
    """Phase 1 of the simplex method ended with a positive residual."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class LPUnboundedError(NumericalError):
    """The LP objective is unbounded below."""


class DualInfeasibleError(NumericalError):
    """A multiplier lies outside the domain of the dual function (d = -inf)."""


class ConvergenceError(NumericalError):
    """An iterative inner solver hit its iteration cap."""

    def __init__(self, message, grad_norm):
        super().__init__(message)
        self.grad_norm = grad_norm


class DivergenceError(NumericalError):
    """Training produced a non-finite loss or gradient."""


class UnboundedOuterError(NumericalError):
    """The outer half-space intersection is unbounded in the query direction."""
