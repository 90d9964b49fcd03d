"""Command-line entry points.

Four subcommands: `run` executes a config-driven experiment,
`verify-duality` and `grad-check` are self-contained verification
sweeps over random instances, and `attack-eval` scores a saved
parameter dump under an attack. The verification sweeps split their
instances across WASSROBUST_THREADS workers; results are keyed by
instance index, so the thread count never changes the output.
"""

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .attacks import evaluate_under_attack
from .config import load_experiment
from .errors import ConfigurationError
from .experiment import (
    build_dataset,
    build_model,
    load_params,
    run_experiment,
)
from .models import (
    Datum,
    LinearLeastSquares,
    LogisticModel,
    ModelParams,
    logistic_lipschitz,
)
from .numdiff import central_difference
from .robust import RobustConfig, danskin_gradient, duality_gap, inner_max_oracle
from .transport import TransportCost
from .utils import generator, max_threads


def _parallel_map(fn, count):
    """fn over range(count), in index order, across WASSROBUST_THREADS."""
    workers = max_threads()
    if workers == 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


def _duality_gap_instance(seed):
    rng = generator(seed, 0)
    d = int(rng.integers(1, 4))
    atoms = int(rng.integers(2, 7))
    X = rng.uniform(-1.0, 1.0, size=(atoms, d))
    if rng.uniform() < 0.5:
        model = LogisticModel(d)
        y = rng.integers(0, 2, size=atoms).astype(float)
    else:
        model = LinearLeastSquares(d)
        y = rng.uniform(-1.0, 1.0, size=atoms)
    theta = 0.8 * rng.normal(size=d)
    samples = [Datum(X[i], float(y[i])) for i in range(atoms)]
    rho = float(rng.uniform(0.05, 1.0))
    Z_grid = np.vstack([X,
                        X + 0.5 * rng.normal(size=(atoms, d)),
                        rng.uniform(-1.5, 1.5, size=(8, d))])
    gap, _, _ = duality_gap(model, ModelParams(theta, 0.0), samples, rho,
                            TransportCost(), Z_grid)
    return gap


def cmd_verify_duality(args):
    gaps = _parallel_map(
        lambda i: _duality_gap_instance(args.seed * 1_000_003 + i),
        args.instances)
    worst = max(gaps)
    ok = worst <= 1e-6
    print("verify-duality: %d instances, max |dual - primal| = %.3g, "
          "tolerance 1e-06: %s" % (args.instances, worst, "PASS" if ok else "FAIL"))
    return 0 if ok else 1


def _grad_check_instance(seed):
    rng = generator(seed, 0)
    d = int(rng.integers(1, 4))
    x = rng.uniform(-1.0, 1.0, size=d)
    yv = float(rng.integers(0, 2))
    theta = 0.5 * rng.normal(size=d)
    bounds = logistic_lipschitz(float(np.linalg.norm(theta)) + 0.5,
                                float(np.linalg.norm(x)) + 0.5)
    model = LogisticModel(d, bounds)
    c = TransportCost()
    gamma = 2.0 * bounds.l_zz / c.mu + 1.0
    cfg = RobustConfig(rho=float(rng.uniform(0.1, 1.0)),
                       gamma0=bounds.l_zz / c.mu + 0.1,
                       oracle_eps=1e-12, oracle_step=1.0 / (2.0 * gamma),
                       oracle_max_iters=20000)
    z = Datum(x, yv)
    params = ModelParams(theta, gamma)
    analytic = danskin_gradient(model, params, z, cfg, c)

    def value(vec):
        _, val, _ = inner_max_oracle(
            model, ModelParams(vec[:-1], float(vec[-1])), z, cfg, c)
        return val

    fd = central_difference(value, params.as_vector(), step=1e-5)
    scale = max(1.0, float(np.linalg.norm(analytic)))
    return float(np.linalg.norm(analytic - fd)) / scale


def cmd_grad_check(args):
    errs = _parallel_map(
        lambda i: _grad_check_instance(args.seed * 7_777_777 + i),
        args.trials)
    worst = max(errs)
    ok = worst <= 1e-4
    print("grad-check: %d trials, max relative error = %.3g, "
          "tolerance 1e-04: %s" % (args.trials, worst, "PASS" if ok else "FAIL"))
    return 0 if ok else 1


def cmd_attack_eval(args):
    cfg = load_experiment(args.config)
    if cfg.attack is None:
        raise ConfigurationError("attack-eval needs attack.kind in the config")
    params = load_params(args.params_file)
    data = build_dataset(cfg.dataset)
    model = build_model(cfg.model_kind, data.feature_dim, cfg.model_hidden)
    if len(params.theta) != model.param_dim:
        raise ConfigurationError(
            "parameter dump has %d weights, model %r expects %d"
            % (len(params.theta), cfg.model_kind, model.param_dim))
    X, y = data.features, data.labels
    clean = float(np.mean(model.predict(params.theta, X) != y.astype(int)))
    adv = evaluate_under_attack(model, params, X, y, cfg.attack)
    print("clean_err = %r" % clean)
    print("adv_err[%s, eps=%r] = %r" % (cfg.attack.kind, cfg.attack.eps_adv, adv))
    return 0


def _parser():
    parser = argparse.ArgumentParser(
        prog="wassrobust",
        description="Distributionally robust training toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a config-driven experiment")
    p_run.add_argument("config")

    p_dual = sub.add_parser("verify-duality",
                            help="check dual = primal on random instances")
    p_dual.add_argument("--instances", type=int, default=100)
    p_dual.add_argument("--seed", type=int, default=0)

    p_grad = sub.add_parser("grad-check",
                            help="compare analytic and numeric gradients")
    p_grad.add_argument("--trials", type=int, default=50)
    p_grad.add_argument("--seed", type=int, default=0)

    p_atk = sub.add_parser("attack-eval",
                           help="score a parameter dump under an attack")
    p_atk.add_argument("params_file")
    p_atk.add_argument("config")
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            return run_experiment(args.config)
        if args.command == "verify-duality":
            return cmd_verify_duality(args)
        if args.command == "grad-check":
            return cmd_grad_check(args)
        return cmd_attack_eval(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
