"""Command-line entry point.

    frontiernet list-problems
    frontiernet train --config cfg.json --out model.json
    frontiernet train --preset box --out model.json
    frontiernet frontier --checkpoint model.json --grid 1001 --csv frontier.csv --realized
    frontiernet baseline --config cfg.json --csv baseline.csv
    frontiernet gradcheck --problem box_biobjective --seed 1
    frontiernet ingest-returns --prices prices.csv --out problem.json

Errors print a single ``error: <kind>: <message>`` line on stderr.  Exit
status is 0 on success, 1 for usage/input problems and 2 when a numerical
procedure fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import io as fio
from .errors import (
    CheckpointError,
    ConfigError,
    ConvergenceError,
    DivergenceError,
    DualInfeasibleError,
    FrontierError,
    InfeasibleSystemError,
    LPInfeasibleError,
    LPUnboundedError,
    NumericalError,
    ShapeError,
    UnboundedOuterError,
)
from .frontier import (
    baseline_fixed,
    baseline_random,
    default_threads,
    error_stats,
    evaluate_frontier,
    realized_epsilons,
)
from .gradcheck import gradient_check
from .problems import BUILTIN_NAMES, make_builtin, problem_from_descriptor
from .training import sample_scalarizations, train

log = logging.getLogger("frontiernet")

GRADCHECK_TOL = 1e-5

_ERROR_KINDS = [
    (DivergenceError, "divergence"),
    (LPInfeasibleError, "lp-infeasible"),
    (LPUnboundedError, "lp-unbounded"),
    (UnboundedOuterError, "unbounded-outer"),
    (DualInfeasibleError, "dual-infeasible"),
    (ConvergenceError, "convergence"),
    (InfeasibleSystemError, "infeasible-system"),
    (NumericalError, "numerical"),
    (ShapeError, "shape"),
    (ConfigError, "config"),
    (CheckpointError, "checkpoint"),
    (FrontierError, "input"),
]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -- built-in instances and presets -------------------------------------------------

def demo_instance(name):
    """The instance each built-in name refers to on the command line."""
    if name == "mean_variance":
        return fio.ingest_returns(fio.synthetic_prices_path()).problem()
    return make_builtin(name)


def _mv_descriptor():
    return demo_instance("mean_variance").descriptor()


PRESETS = {
    "box": lambda dim: {
        "problem": {"name": "box_biobjective", "params": {"N": 40}},
        "primal_arch": {"hidden_widths": [800] * 3},
        "dual_arch": {"hidden_widths": [1600] * 3, "terminal": "relu"},
        "train": {"epochs": 1000, "learning_rate": 1e-4, "eta": 10, "K": 4, "sampling": "grid"},
        "test": {"grid_size": 1001},
    },
    "ti4": lambda dim: {
        "problem": {"name": "test_instance_4", "params": {"P": dim or 2, "N": 100}},
        "primal_arch": {"hidden_widths": [500] * 2, "replicate_last": dim or 2},
        "dual_arch": {"hidden_widths": [500] * 2, "terminal": "relu"},
        "train": {"epochs": 200, "learning_rate": 1e-4, "eta": 10, "K": 50, "sampling": "uniform"},
        "test": {"samples": 5000, "seed": 0},
    },
    "hyperball": lambda dim: {
        "problem": {"name": "hyperball", "params": {"N": dim or 2, "eps": 0.01}},
        "primal_arch": {"hidden_widths": [300] * 2},
        "dual_arch": {"hidden_widths": [300] * 2, "terminal": "softplus"},
        "train": {"epochs": 2500, "learning_rate": 1e-4, "eta": 10, "K": 50, "sampling": "uniform"},
        "test": {"samples": 5000, "seed": 0},
    },
    "portfolio": lambda dim: {
        "problem": _mv_descriptor(),
        "primal_arch": {"hidden_widths": [800] * 3, "pre_relu": True},
        "dual_arch": {"hidden_widths": [800] * 3, "terminal": "softplus"},
        "train": {"epochs": 5000, "learning_rate": 1e-4, "eta": 10, "K": 5,
                  "sampling": [[0, 1], [0.25, 0.75], [0.5, 0.5], [0.75, 0.25], [1 - 1e-5, 1e-5]]},
        "test": {"grid_size": 1001},
    },
    "lvop": lambda dim: {
        "problem": {"name": "lvop", "params": {"delta": 1e-4}},
        "primal_arch": {"hidden_widths": [800] * 3},
        "dual_arch": {"hidden_widths": [800] * 3, "terminal": "dual_nullspace"},
        "train": {"epochs": 500, "learning_rate": 1e-4, "eta": 1e-4, "delta": 1e-4,
                  "K": 20, "sampling": "grid"},
        "test": {"grid_size": 501},
    },
}


def preset_config(name, dim=None):
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    if dim is not None and name not in ("ti4", "hyperball"):
        raise UsageError("--dim only applies to presets ti4 and hyperball")
    return PRESETS[name](dim)


def _experiment(args):
    if args.preset:
        return fio.config_from_dict(preset_config(args.preset, args.dim))
    if args.dim is not None:
        raise UsageError("--dim needs --preset")
    return fio.load_config(args.config)


# -- test weights -------------------------------------------------------------------

def _read_weights(path, P):
    try:
        W = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError:
        W = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=1)
    if W.shape[1] != P:
        raise UsageError(f"weights file has {W.shape[1]} columns, problem has P = {P}")
    return W


def _test_weights(problem, grid=None, samples=None, seed=0, weights=None):
    given = [x is not None for x in (grid, samples, weights)]
    if sum(given) != 1:
        raise UsageError("give exactly one of --grid, --samples or --weights")
    if weights is not None:
        W = _read_weights(weights, problem.P)
    elif grid is not None:
        if problem.P != 2:
            raise UsageError("--grid is only defined for P = 2; use --samples")
        W = sample_scalarizations(2, grid, "grid")
    else:
        W = sample_scalarizations(problem.P, samples, "uniform", seed=seed)
    return problem.clamp_weights(W)


def _weights_from_config(problem, cfg, args):
    grid, samples, weights = args.grid, args.samples, args.weights
    seed = args.seed if args.seed is not None else cfg.test.get("seed", 0)
    if grid is None and samples is None and weights is None:
        grid, samples = cfg.test.get("grid_size"), cfg.test.get("samples")
        if "weights_file" in cfg.test:
            weights = os.path.join(cfg.base_dir, cfg.test["weights_file"])
        if grid is None and samples is None and weights is None:
            grid = 1001 if problem.P == 2 else None
            samples = None if problem.P == 2 else 1000
    return _test_weights(problem, grid, samples, seed, weights)


# -- subcommands --------------------------------------------------------------------

def _summary(problem):
    if problem.name == "mean_variance":
        return f"{problem.S} assets (bundled synthetic prices)"
    if problem.name == "lvop":
        return f"delta={problem.augmentation:g}"
    return " ".join(f"{k}={v}" for k, v in problem.params().items())


def cmd_list_problems(args):
    for name in BUILTIN_NAMES:
        p = demo_instance(name)
        print(f"{name:16s} P={p.P} N={p.N} M={p.M}  {_summary(p)}")
    return 0


def cmd_train(args):
    cfg = _experiment(args)
    if args.print_config:
        if args.preset:
            print(json.dumps(preset_config(args.preset, args.dim), indent=1))
        else:
            with open(args.config) as fh:
                print(fh.read().rstrip())
        return 0
    if not args.out:
        raise UsageError("train needs --out")
    problem = cfg.build_problem()
    pa, da = cfg.build_architectures(problem)
    tc = cfg.train
    if args.epochs is not None:
        if args.epochs < 0:
            raise UsageError("--epochs must be nonnegative")
        tc.epochs = args.epochs
    t0 = time.perf_counter()
    res = train(problem, pa, da, tc)
    elapsed = time.perf_counter() - t0
    final = res.history[-1].total if res.history else None
    ck = fio.Checkpoint(problem.descriptor(), pa, da, res.primal, res.dual, tc,
                        len(res.history), final, tc.seed, res.eta)
    fio.save_checkpoint(args.out, ck)
    hist = args.history or os.path.splitext(args.out)[0] + "_history.csv"
    with open(hist, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["epoch", "total", "stationarity", "complementary_slackness"])
        for k, h in enumerate(res.history):
            out.writerow([k, repr(h.total), repr(h.stationarity), repr(h.complementary_slackness)])
    print(f"trained {len(res.history)} epochs in {elapsed:.2f}s, final loss "
          f"{'n/a' if final is None else f'{final:.6g}'}, eta {res.eta:.6g}")
    print(f"checkpoint: {args.out}")
    print(f"history: {hist}")
    return 0


def cmd_frontier(args):
    ck = fio.load_checkpoint(args.checkpoint)
    problem = problem_from_descriptor(ck.problem)
    W = _test_weights(problem, args.grid, args.samples, args.seed or 0, args.weights)
    threads = args.threads or default_threads()
    pts = evaluate_frontier(problem, (ck.primal_arch, ck.primal), (ck.dual_arch, ck.dual), W, threads)
    realized = None
    if args.realized:
        if problem.P != 2:
            raise UsageError("--realized is only available for P = 2")
        realized = realized_epsilons(pts, threads)
    fio.export_frontier_csv(args.csv, pts, realized)
    s = error_stats([p.epsilon for p in pts])
    print(f"{len(pts)} points, epsilon mean {s.mean:.6g} median {s.median:.6g} max {s.max:.6g}")
    if realized is not None:
        r = error_stats(realized)
        print(f"realized epsilon mean {r.mean:.6g} median {r.median:.6g} max {r.max:.6g}")
    low = min(p.epsilon for p in pts)
    if low < 0:
        print(f"note: smallest epsilon {low:.3g} is negative (dual evaluated to finite precision)")
    return 0


def cmd_baseline(args):
    cfg = _experiment(args)
    problem = cfg.build_problem()
    W = _weights_from_config(problem, cfg, args)
    threads = args.threads or default_threads()
    seed = args.seed if args.seed is not None else cfg.train.seed
    rand = baseline_random(problem, seed, W, threads)
    fixed = baseline_fixed(problem, W)
    with open(args.csv, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow([f"w_{i + 1}" for i in range(problem.P)] + ["epsilon_random", "epsilon_fixed"])
        for k in range(W.shape[0]):
            out.writerow([repr(float(v)) for v in (*W[k], rand[k], fixed[k])])
    print(f"{W.shape[0]} weights, random baseline mean {rand.mean():.6g}, "
          f"fixed baseline mean {fixed.mean():.6g}")
    return 0


def cmd_gradcheck(args):
    if args.problem not in BUILTIN_NAMES:
        raise UsageError(f"unknown problem {args.problem!r}; choose from {', '.join(BUILTIN_NAMES)}")
    rep = gradient_check(demo_instance(args.problem), args.seed, args.configs)
    print(f"max relative error {rep.max_rel_error:.3e} "
          f"({rep.loss_checks} loss checks, {rep.vjp_checks} vjp checks, {rep.skipped} skipped at kinks)")
    if rep.loss_checks == 0:
        raise UsageError("every configuration crossed a kink; try another seed")
    if rep.max_rel_error > GRADCHECK_TOL:
        raise NumericalError(f"max relative error {rep.max_rel_error:.3e} exceeds {GRADCHECK_TOL:g}")
    return 0


def cmd_ingest_returns(args):
    ds = fio.ingest_returns(args.prices)
    problem = ds.problem()
    fio.save_problem(args.out, problem)
    print(f"{len(ds.assets)} assets, {ds.prices.shape[0]} price rows -> {args.out}")
    return 0


# -- parser -------------------------------------------------------------------------

def build_parser():
    ap = _Parser(prog="frontiernet", description="Neural inner/outer approximations of convex vector optimization frontiers.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    sub.add_parser("list-problems", help="list the built-in problems")

    def add_source(p):
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="experiment config (JSON)")
        src.add_argument("--preset", choices=sorted(PRESETS), help="full-scale experiment preset")
        p.add_argument("--dim", type=int, help="problem size for presets ti4 (P) and hyperball (P = N)")

    def add_weights(p):
        p.add_argument("--grid", type=int, help="K regularly spaced weights (P = 2 only)")
        p.add_argument("--samples", type=int, help="K uniform weights on the simplex")
        p.add_argument("--seed", type=int, help="seed for --samples (and the random baseline)")
        p.add_argument("--weights", help="CSV file with one weight vector per row")
        p.add_argument("--threads", type=int, help="worker threads (default: CVOP_THREADS or cpu count)")

    p = sub.add_parser("train", help="train primal and dual networks")
    add_source(p)
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--history", help="loss-history CSV (default: <out>_history.csv)")
    p.add_argument("--epochs", type=int, help="override the configured epoch count")
    p.add_argument("--print-config", action="store_true", help="print the config and exit")

    p = sub.add_parser("frontier", help="evaluate a checkpoint and export the frontier")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--csv", required=True)
    p.add_argument("--realized", action="store_true", help="add realized errors (P = 2)")
    add_weights(p)

    p = sub.add_parser("baseline", help="random and fixed-point baselines")
    add_source(p)
    p.add_argument("--csv", required=True)
    add_weights(p)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--problem", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--configs", type=int, default=20, help="random configurations to check")

    p = sub.add_parser("ingest-returns", help="build a mean-variance problem from prices")
    p.add_argument("--prices", required=True)
    p.add_argument("--out", required=True)
    return ap


COMMANDS = {
    "list-problems": cmd_list_problems,
    "train": cmd_train,
    "frontier": cmd_frontier,
    "baseline": cmd_baseline,
    "gradcheck": cmd_gradcheck,
    "ingest-returns": cmd_ingest_returns,
}


def _fail(kind, message, code):
    print(f"error: {kind}: {' '.join(str(message).split())}", file=sys.stderr)
    return code


def run(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", exc, 1)
    except FrontierError as exc:
        kind = next(k for cls, k in _ERROR_KINDS if isinstance(exc, cls))
        return _fail(kind, exc, 2 if isinstance(exc, NumericalError) else 1)
    except OSError as exc:
        return _fail("io", f"{exc.filename or ''}: {exc.strerror or exc}", 1)


def main():
    sys.exit(run())
