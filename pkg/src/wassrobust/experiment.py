"""Config-driven experiment pipeline and the parameter dump format.

A run is: build the dataset, train every configured algorithm, evaluate
the result under the configured attack, and write one metrics CSV
atomically at the end. Everything downstream of the config is seeded,
so rerunning a config reproduces the output file byte for byte.
"""

import os
import struct
import sys

import numpy as np

from .attacks import evaluate_under_attack
from .config import load_experiment
from .data import gen_synthetic, load_csv, load_idx
from .errors import (
    BadMagicError,
    ConfigurationError,
    TruncatedFileError,
)
from .federated import drfl_train, fedavg_train, partition
from .metrics import MetricsRow, write_metrics
from .models import (
    LinearLeastSquares,
    LogisticModel,
    ModelParams,
    TinyMLP,
)
from .trainers import train

PARAMS_MAGIC = b"WRB1"


def save_params(path, params):
    """Dump trained parameters: magic, u32 theta length, thetas, gamma."""
    theta = np.asarray(params.theta, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(struct.pack("<I", len(theta)))
        fh.write(theta.tobytes())
        fh.write(struct.pack("<d", float(params.gamma)))


def load_params(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != PARAMS_MAGIC:
        raise BadMagicError("%s: not a parameter dump" % path)
    if len(blob) < 8:
        raise TruncatedFileError("%s: missing length field" % path)
    (dim,) = struct.unpack("<I", blob[4:8])
    want = 8 + 8 * dim + 8
    if len(blob) != want:
        raise TruncatedFileError(
            "%s: %d bytes, expected %d for dim %d" % (path, len(blob), want, dim))
    theta = np.frombuffer(blob[8:8 + 8 * dim], dtype="<f8").astype(float)
    (gamma,) = struct.unpack("<d", blob[8 + 8 * dim:])
    return ModelParams(theta, gamma)


def build_dataset(src):
    kind = src["kind"]
    if kind == "idx":
        return load_idx(src["images"], src["labels"], limit=src["limit"])
    if kind == "csv":
        return load_csv(src["path"], src["label_column"], src["delimiter"])
    return gen_synthetic(kind, src["n"], src["d"], src["noise"], src["seed"])


def build_model(kind, feature_dim, hidden=8):
    if kind == "logistic":
        return LogisticModel(feature_dim)
    if kind == "linear-least-squares":
        return LinearLeastSquares(feature_dim)
    if kind == "tiny-mlp":
        return TinyMLP(feature_dim, hidden)
    raise ConfigurationError("unknown model kind %r" % (kind,))


def params_file(path, algorithm, multi):
    if not multi:
        return path
    stem, dot, ext = path.rpartition(".")
    if not dot:
        return "%s-%s" % (path, algorithm)
    return "%s-%s.%s" % (stem, algorithm, ext)


def _clean_error(model, params, X, y):
    return float(np.mean(model.predict(params.theta, X) != y.astype(int)))


def execute(cfg):
    """Run every configured algorithm; returns (metrics rows, final params)."""
    data = build_dataset(cfg.dataset)
    model = build_model(cfg.model_kind, data.feature_dim, cfg.model_hidden)
    X, y = data.features, data.labels
    classify = model.is_classifier and data.class_count != "regression"

    rows = []
    finals = {}
    for algo in cfg.algorithms:
        tc = cfg.trainer_config(algo)
        if cfg.federated_workers > 0:
            shards = partition((X, y), cfg.federated_scheme,
                               cfg.federated_workers, cfg.seed)
            if algo == "spgda":
                params, metrics = drfl_train(cfg.federated_workers, shards,
                                             model, cfg.reg, tc)
            else:
                params, metrics = fedavg_train(cfg.federated_workers, shards,
                                               model, cfg.reg,
                                               cfg.local_epochs, tc)
            for rnd, objective, gnorm in metrics:
                rows.append(MetricsRow(cfg.run_name, algo, rnd,
                                       objective=objective,
                                       stationarity=gnorm))
            last_iter = len(metrics) - 1 if metrics else 0
        else:
            clean = {}
            if classify:
                hooks = [lambda t, p: clean.__setitem__(
                    t, _clean_error(model, p, X, y))]
            else:
                hooks = []
            params, trace = train((X, y), model, cfg.reg, tc, eval_hooks=hooks)
            for it, objective, stationarity in trace:
                rows.append(MetricsRow(cfg.run_name, algo, it,
                                       objective=objective,
                                       stationarity=stationarity,
                                       clean_err=clean.get(it)))
            last_iter = trace[-1][0]
        finals[algo] = params

        if cfg.attack is not None and classify:
            adv = evaluate_under_attack(model, params, X, y, cfg.attack, tc.cost)
            rows.append(MetricsRow(cfg.run_name, algo, last_iter,
                                   clean_err=_clean_error(model, params, X, y),
                                   attack=cfg.attack.kind,
                                   eps=cfg.attack.eps_adv, adv_err=adv))
    return rows, finals


def run_experiment(config_path):
    """Exit code of a full config-driven run; 0 only on success."""
    try:
        cfg = load_experiment(config_path)
    except (ConfigurationError, OSError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    try:
        rows, finals = execute(cfg)
        for target in (cfg.output_path, cfg.params_path):
            parent = os.path.dirname(target) if target else ""
            if parent:
                os.makedirs(parent, exist_ok=True)
        write_metrics(rows, cfg.output_path)
        if cfg.params_path:
            multi = len(finals) > 1
            for algo, params in finals.items():
                save_params(params_file(cfg.params_path, algo, multi), params)
    except (ValueError, RuntimeError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    return 0
