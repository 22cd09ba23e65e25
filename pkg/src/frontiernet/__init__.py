"""Neural-network inner and outer approximations of convex vector optimization
frontiers: a primal net maps scalarization weights to feasible points, a dual
net to feasible multipliers, and both are trained on KKT residuals."""

from .errors import FrontierError, NumericalError
from .frontier import error_stats, evaluate_frontier, realized_epsilons
from .network import Architecture, Params, dual_architecture, init_params, primal_architecture
from .problems import BUILTIN_NAMES, make_builtin
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Architecture",
    "BUILTIN_NAMES",
    "FrontierError",
    "NumericalError",
    "Params",
    "TrainConfig",
    "dual_architecture",
    "error_stats",
    "evaluate_frontier",
    "init_params",
    "make_builtin",
    "primal_architecture",
    "realized_epsilons",
    "train",
]
