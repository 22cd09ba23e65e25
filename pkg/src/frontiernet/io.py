"""Configs, checkpoints, frontier CSVs and price ingestion.

Everything on disk is JSON or CSV.  Floats go through ``json`` / ``repr``,
which emit the shortest string that round-trips, so a checkpoint reloads
bit-identically.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import jsonschema
import numpy as np

from .errors import CheckpointError, ConfigError, InvalidInputError
from .network import Architecture, Params, dual_architecture, primal_architecture, replicate_last
from .problems import make_builtin, problem_from_descriptor
from .training import TrainConfig

log = logging.getLogger(__name__)

__all__ = [
    "FORMAT_VERSION",
    "CONFIG_SCHEMA",
    "ExperimentConfig",
    "Checkpoint",
    "ReturnsDataset",
    "config_from_dict",
    "load_config",
    "save_checkpoint",
    "load_checkpoint",
    "export_frontier_csv",
    "read_frontier_csv",
    "ingest_returns",
    "save_problem",
    "load_problem",
    "synthetic_prices_path",
]

FORMAT_VERSION = 1

# mean returns and covariances of daily log returns are rescaled on ingestion
MEAN_SCALE = 100.0**2 / 6.0
COV_SCALE = 100.0**2

_ARCH_SCHEMA = {
    "type": "object",
    "properties": {
        "hidden_widths": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "terminal": {"type": "string"},
        "tol": {"type": "number", "minimum": 0},
        "pre_relu": {"type": "boolean"},
        "centered": {"type": "boolean"},
        "replicate_last": {"type": "integer", "minimum": 0},
    },
    "required": ["hidden_widths"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "problem": {
            "type": "object",
            "properties": {
                "name": {"type": "string"},
                "params": {"type": "object"},
                "file": {"type": "string"},
            },
            "oneOf": [{"required": ["name"]}, {"required": ["file"]}],
            "additionalProperties": False,
        },
        "primal_arch": _ARCH_SCHEMA,
        "dual_arch": _ARCH_SCHEMA,
        "train": {
            "type": "object",
            "properties": {
                "epochs": {"type": "integer", "minimum": 0},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0, "default": 1e-4},
                "eta": {"oneOf": [{"type": "number", "minimum": 0}, {"const": "auto"}],
                        "default": "auto"},
                "delta": {"type": ["number", "null"], "minimum": 0, "exclusiveMaximum": 1},
                "cs_tolerance": {"type": "number", "minimum": 0, "default": 5e-5},
                "K": {"type": "integer", "minimum": 1, "default": 4},
                "sampling": {
                    "oneOf": [
                        {"enum": ["grid", "uniform"]},
                        {"type": "array", "minItems": 1,
                         "items": {"type": "array", "items": {"type": "number"}}},
                    ],
                    "default": "grid",
                },
                "seed": {"type": "integer", "minimum": 0, "default": 0},
                "loss_kind": {"enum": ["kkt", "duality_gap"], "default": "kkt"},
            },
            "required": ["epochs"],
            "additionalProperties": False,
        },
        "test": {
            "type": "object",
            "properties": {
                "grid_size": {"type": "integer", "minimum": 1},
                "samples": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "weights_file": {"type": "string"},
            },
            "additionalProperties": False,
        },
    },
    "required": ["problem", "primal_arch", "dual_arch", "train"],
    "additionalProperties": False,
}


def _schema_error(err: jsonschema.ValidationError):
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        return ConfigError(f"unknown key(s) {', '.join(map(repr, extra))} at {where}")
    return ConfigError(f"invalid value at {where}: {err.message}")


def _read_json(path, err_cls):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise err_cls(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise err_cls(f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


# -- experiment configs -------------------------------------------------------------

@dataclass
class ExperimentConfig:
    problem: dict
    primal_arch: dict
    dual_arch: dict
    train: TrainConfig
    test: dict = field(default_factory=dict)
    base_dir: str = "."

    def build_problem(self):
        if "file" in self.problem:
            return load_problem(os.path.join(self.base_dir, self.problem["file"]))
        return make_builtin(self.problem["name"], **self.problem.get("params", {}))

    def build_architectures(self, problem):
        pa = dict(self.primal_arch)
        n_free = pa.pop("replicate_last", None)
        rep = None if n_free is None else replicate_last(n_free, problem.N)
        primal = primal_architecture(problem, pa.pop("hidden_widths"), replication=rep, **pa)
        da = dict(self.dual_arch)
        if set(da) - {"hidden_widths", "terminal"}:
            raise ConfigError("dual_arch accepts only hidden_widths and terminal")
        dual = dual_architecture(problem, da["hidden_widths"], da.get("terminal"))
        return primal, dual


def config_from_dict(doc, base_dir="."):
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise _schema_error(errors[0])
    test = doc.get("test", {})
    if "grid_size" in test and "samples" in test:
        raise ConfigError("test: give grid_size or samples, not both")
    return ExperimentConfig(dict(doc["problem"]), dict(doc["primal_arch"]), dict(doc["dual_arch"]),
                            TrainConfig(**doc["train"]), dict(test), base_dir)


def load_config(path) -> ExperimentConfig:
    doc = _read_json(path, ConfigError)
    return config_from_dict(doc, os.path.dirname(os.path.abspath(path)))


# -- problems on disk ---------------------------------------------------------------

def save_problem(path, problem):
    with open(path, "w") as fh:
        json.dump(problem.descriptor(), fh, indent=1)
        fh.write("\n")


def load_problem(path):
    doc = _read_json(path, ConfigError)
    if not isinstance(doc, dict) or "name" not in doc:
        raise ConfigError(f"{path}: problem file needs a 'name'")
    return problem_from_descriptor(doc)


# -- checkpoints --------------------------------------------------------------------

@dataclass
class Checkpoint:
    problem: dict
    primal_arch: Architecture
    dual_arch: Architecture
    primal: Params
    dual: Params
    train: TrainConfig
    epochs_trained: int
    final_loss: Optional[float]
    seed: int
    eta: Optional[float] = None
    format_version: int = FORMAT_VERSION


def _params_to_json(p: Params):
    return {"weights": [w.tolist() for w in p.weights], "biases": [b.tolist() for b in p.biases]}


def _params_from_json(d):
    try:
        return Params([np.array(w, dtype=float).reshape(len(w), -1) for w in d["weights"]],
                      [np.array(b, dtype=float) for b in d["biases"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt parameter block: {exc}") from None


def save_checkpoint(path, ckpt: Checkpoint):
    tc = ckpt.train
    doc = {
        "format_version": FORMAT_VERSION,
        "problem": ckpt.problem,
        "primal_arch": ckpt.primal_arch.to_dict(),
        "dual_arch": ckpt.dual_arch.to_dict(),
        "primal": _params_to_json(ckpt.primal),
        "dual": _params_to_json(ckpt.dual),
        "train": {
            "epochs": tc.epochs, "learning_rate": tc.learning_rate, "eta": tc.eta,
            "delta": tc.delta, "cs_tolerance": tc.cs_tolerance, "K": tc.K,
            "sampling": tc.sampling if isinstance(tc.sampling, str)
            else np.asarray(tc.sampling, dtype=float).tolist(),
            "seed": tc.seed, "loss_kind": tc.loss_kind,
        },
        "epochs_trained": int(ckpt.epochs_trained),
        "final_loss": None if ckpt.final_loss is None else float(ckpt.final_loss),
        "eta": None if ckpt.eta is None else float(ckpt.eta),
        "seed": int(ckpt.seed),
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, allow_nan=False)
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    doc = _read_json(path, CheckpointError)
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path}: not a checkpoint")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format_version {version!r}, expected {FORMAT_VERSION}")
    try:
        pa = Architecture.from_dict(doc["primal_arch"])
        da = Architecture.from_dict(doc["dual_arch"])
        primal = _params_from_json(doc["primal"])
        dual = _params_from_json(doc["dual"])
        tc = TrainConfig(**doc["train"])
        ck = Checkpoint(doc["problem"], pa, da, primal, dual, tc, doc["epochs_trained"],
                        doc["final_loss"], doc["seed"], doc.get("eta"), version)
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing field {exc}") from None
    except ConfigError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    primal.check(pa)
    dual.check(da)
    return ck


# -- frontier export ----------------------------------------------------------------

def export_frontier_csv(path, points, realized=None):
    if not points:
        raise InvalidInputError("no frontier points to export")
    P = len(points[0].w)
    if realized is not None and len(realized) != len(points):
        raise InvalidInputError("realized errors must match the number of points")
    header = [f"w_{i + 1}" for i in range(P)] + [f"f_{i + 1}" for i in range(P)] + ["dual", "epsilon"]
    if realized is not None:
        header.append("epsilon_realized")
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for k, pt in enumerate(points):
            row = [*pt.w, *pt.f, pt.dual, pt.epsilon]
            if realized is not None:
                row.append(realized[k])
            out.writerow([repr(float(v)) for v in row])


def read_frontier_csv(path):
    """Columns of an exported frontier as ``{name: array}``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInputError(f"{path} is empty")
    data = np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(rows[0]))
    return {name: data[:, j] for j, name in enumerate(rows[0])}


# -- market data --------------------------------------------------------------------

@dataclass
class ReturnsDataset:
    assets: list
    prices: np.ndarray
    log_returns: np.ndarray
    mean: np.ndarray  # scaled
    cov: np.ndarray   # scaled

    def problem(self, **kw):
        return make_builtin("mean_variance", r_bar=self.mean, C=self.cov, assets=self.assets, **kw)


def ingest_returns(prices_csv) -> ReturnsDataset:
    """Scaled mean and covariance of daily log returns from a price CSV.

    First column is the date, the rest are per-asset prices.  Assets with an
    empty cell are dropped with a warning.
    """
    with open(prices_csv, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise InvalidInputError(f"{prices_csv}: no price rows")
    names = rows[0][1:]
    body = rows[1:]
    if len(body) < 3:
        raise InvalidInputError(f"{prices_csv}: need at least 3 price rows, got {len(body)}")
    keep = []
    for j, name in enumerate(names):
        col = [r[j + 1].strip() if j + 1 < len(r) else "" for r in body]
        if any(c == "" or c.lower() in ("na", "nan") for c in col):
            log.warning("dropping asset %s: missing prices", name)
            continue
        keep.append(j)
    if not keep:
        raise InvalidInputError(f"{prices_csv}: every asset has missing prices")
    prices = np.empty((len(body), len(keep)))
    for i, r in enumerate(body):
        for c, j in enumerate(keep):
            try:
                prices[i, c] = float(r[j + 1])
            except ValueError:
                raise InvalidInputError(
                    f"{prices_csv}: non-numeric price {r[j + 1]!r} on row {i + 2}") from None
    if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
        raise InvalidInputError(f"{prices_csv}: prices must be finite and strictly positive")
    R = np.diff(np.log(prices), axis=0)
    mean = R.mean(axis=0) * MEAN_SCALE
    cov = np.atleast_2d(np.cov(R, rowvar=False, ddof=1)) * COV_SCALE
    return ReturnsDataset([names[j] for j in keep], prices, R, mean, cov)


def synthetic_prices_path():
    """Bundled 10-asset synthetic price history (253 trading days)."""
    return os.path.join(os.path.dirname(__file__), "data", "synthetic_prices.csv")
