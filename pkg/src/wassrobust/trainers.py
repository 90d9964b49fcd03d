"""Training loops: the robust primal-dual algorithms and three baselines.

spgd resolves each batch sample's inner maximization to oracle accuracy
before every parameter step; spgda takes the lazy route of a single
ascent step per sample. erm, adv-train, and wrm are the comparison
baselines (plain empirical risk, attack-augmented risk, and the fixed-
gamma perturbed loss).

Everything is deterministic given the run seed: parameters initialise
from stream 0, and a central trainer draws its batches as worker 1 of
the federated layout so single-worker federated runs can replay the
sequential iterate sequence exactly.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .attacks import AttackConfig, run_attack, wrm_attack
from .errors import ConfigurationError
from .models import ModelParams
from .robust import (
    RobustConfig,
    ascent_step,
    inner_max_batch,
    perturbed_gradient,
    robust_objective,
    stationarity_distance,
)
from .transport import TransportCost
from .utils import batch_indices, generator

ALGORITHMS = ("spgd", "spgda", "erm", "adv-train", "wrm")
SCHEDULES = ("constant", "inv-sqrt")

# Stream assignments under the shared seed-derivation rule.
INIT_STREAM = 0
CENTRAL_STREAM = 1


@dataclass(frozen=True)
class TrainerConfig:
    algorithm: str
    alpha: float = 0.001
    eta: float = 0.02
    batch_size: int = 128
    iters: int = 1000
    seed: int = 0
    robust: Optional[RobustConfig] = None
    wrm_gamma: float = 1.0
    attack: Optional[AttackConfig] = None
    cost: TransportCost = TransportCost()
    schedule: str = "constant"
    stride: int = 50

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError("unknown algorithm %r" % (self.algorithm,))
        if self.alpha <= 0 or self.eta <= 0:
            raise ConfigurationError("alpha and eta must be positive")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.iters < 0:
            raise ConfigurationError("iters must be >= 0")
        if self.stride < 1:
            raise ConfigurationError("stride must be >= 1")
        if self.schedule not in SCHEDULES:
            raise ConfigurationError("unknown schedule %r" % (self.schedule,))
        if self.algorithm in ("spgd", "spgda") and self.robust is None:
            raise ConfigurationError("%s needs a robust config" % self.algorithm)
        if self.algorithm == "adv-train" and self.attack is None:
            raise ConfigurationError("adv-train needs an attack config")
        if self.wrm_gamma <= 0:
            raise ConfigurationError("wrm_gamma must be positive")


@dataclass
class TrainerState:
    params: ModelParams
    iteration: int = 0
    trace: List[Tuple[int, float, float]] = field(default_factory=list)


def _as_xy(dataset):
    X = getattr(dataset, "features", None)
    if X is not None:
        y = dataset.labels
    else:
        X, y = dataset
    return np.asarray(X, dtype=float), np.asarray(y, dtype=float)


def step_scale(cfg, t):
    if cfg.schedule == "constant":
        return 1.0
    return 1.0 / np.sqrt(t + 1.0)


def _batch(X, y, cfg, t, stream=CENTRAL_STREAM):
    idx = batch_indices(len(X), cfg.batch_size, cfg.seed, stream, t)
    return X[idx], y[idx]


def _prox_update(params, grad, alpha, reg, gamma0):
    vec = params.as_vector() - alpha * grad
    theta = reg.prox(alpha, vec[:-1])
    return ModelParams(theta, max(float(vec[-1]), gamma0))


def spgda_batch_gradient(model, params, Xb, yb, robust, c, eta):
    """Lazily maximized batch gradient of the robust surrogate.

    One ascent step of size eta from each anchor stands in for the inner
    maximizer; the returned vector stacks the averaged theta gradient and
    the gamma coordinate rho - mean cost. Shared verbatim by the central
    spgda trainer and the federated workers, which is what makes their
    iterate sequences comparable bit for bit.
    """
    if params.gamma < robust.gamma0 - 1e-12:
        raise ConfigurationError(
            "gamma=%g below gamma0=%g" % (params.gamma, robust.gamma0))
    Z = ascent_step(model, params.theta, params.gamma, Xb, Xb, yb, c, eta)
    return perturbed_gradient(model, params.theta, params.gamma,
                              Xb, Z, yb, robust.rho, c)


def spgd_step(state, dataset, model, reg, cfg):
    """Oracle-accurate robust step: full inner ascent, then prox descent."""
    X, y = _as_xy(dataset)
    t = state.iteration
    Xb, yb = _batch(X, y, cfg, t)
    s = step_scale(cfg, t)
    rcfg = replace(cfg.robust, oracle_step=cfg.eta * s)
    Z, _, _ = inner_max_batch(model, state.params, Xb, yb, rcfg, cfg.cost)
    g = perturbed_gradient(model, state.params.theta, state.params.gamma,
                           Xb, Z, yb, rcfg.rho, cfg.cost)
    params = _prox_update(state.params, g, cfg.alpha * s, reg, cfg.robust.gamma0)
    return TrainerState(params, t + 1, state.trace)


def spgda_step(state, dataset, model, reg, cfg):
    """Lazy robust step: single ascent step per sample, then prox descent."""
    X, y = _as_xy(dataset)
    t = state.iteration
    Xb, yb = _batch(X, y, cfg, t)
    s = step_scale(cfg, t)
    g = spgda_batch_gradient(model, state.params, Xb, yb,
                             cfg.robust, cfg.cost, cfg.eta * s)
    params = _prox_update(state.params, g, cfg.alpha * s, reg, cfg.robust.gamma0)
    return TrainerState(params, t + 1, state.trace)


def erm_step(state, dataset, model, reg, cfg):
    """Stochastic proximal gradient on the plain empirical loss."""
    X, y = _as_xy(dataset)
    t = state.iteration
    Xb, yb = _batch(X, y, cfg, t)
    alpha = cfg.alpha * step_scale(cfg, t)
    g = model.grad_theta(state.params.theta, Xb, yb).mean(axis=0)
    theta = reg.prox(alpha, state.params.theta - alpha * g)
    return TrainerState(state.params.with_theta(theta), t + 1, state.trace)


def adv_train_step(state, dataset, model, reg, cfg):
    """ERM step on batch features replaced by the configured attack."""
    X, y = _as_xy(dataset)
    t = state.iteration
    Xb, yb = _batch(X, y, cfg, t)
    Xa = run_attack(model, state.params, Xb, yb, cfg.attack, cfg.cost)
    alpha = cfg.alpha * step_scale(cfg, t)
    g = model.grad_theta(state.params.theta, Xa, yb).mean(axis=0)
    theta = reg.prox(alpha, state.params.theta - alpha * g)
    return TrainerState(state.params.with_theta(theta), t + 1, state.trace)


def _wrm_cfg(cfg):
    if cfg.attack is not None and cfg.attack.kind == "wrm":
        return replace(cfg.attack, wrm_gamma=cfg.wrm_gamma)
    return AttackConfig("wrm", wrm_gamma=cfg.wrm_gamma, steps=50)


def wrm_step(state, dataset, model, reg, cfg):
    """Fixed-gamma perturbed-loss step; gamma is never a variable here."""
    X, y = _as_xy(dataset)
    t = state.iteration
    Xb, yb = _batch(X, y, cfg, t)
    Z = wrm_attack(model, state.params, Xb, yb, _wrm_cfg(cfg), cfg.cost)
    alpha = cfg.alpha * step_scale(cfg, t)
    g = model.grad_theta(state.params.theta, Z, yb).mean(axis=0)
    theta = reg.prox(alpha, state.params.theta - alpha * g)
    return TrainerState(state.params.with_theta(theta), t + 1, state.trace)


_STEPS = {
    "spgd": spgd_step,
    "spgda": spgda_step,
    "erm": erm_step,
    "adv-train": adv_train_step,
    "wrm": wrm_step,
}


def init_params(model, cfg):
    """Seeded starting point: theta uniform in [-0.05, 0.05], gamma above its floor."""
    theta = generator(cfg.seed, INIT_STREAM).uniform(-0.05, 0.05, model.param_dim)
    if cfg.algorithm == "wrm":
        gamma = cfg.wrm_gamma
    elif cfg.robust is not None:
        gamma = cfg.robust.gamma0 + 1.0
    else:
        gamma = 0.0
    return ModelParams(theta, gamma)


def trace_row(model, X, y, reg, cfg, params):
    """(objective estimate, stationarity sample) for the current params.

    Robust algorithms report the full-batch surrogate F and the composite
    stationarity distance; the baselines report their own training
    objective and the norm of its prox residual (theta block only).
    """
    algo = cfg.algorithm
    if algo in ("spgd", "spgda"):
        rcfg = replace(cfg.robust, oracle_step=cfg.eta)
        obj = robust_objective(model, params, X, y, reg, rcfg, cfg.cost)
        stat = stationarity_distance(model, params, reg, X, y, rcfg, cfg.cost)
        return obj, stat
    if algo == "erm":
        Z = X
    elif algo == "adv-train":
        Z = run_attack(model, params, X, y, cfg.attack, cfg.cost)
    else:
        Z = wrm_attack(model, params, X, y, _wrm_cfg(cfg), cfg.cost)
    obj = float(model.loss(params.theta, Z, y).mean()) + reg.value(params.theta)
    if algo == "wrm":
        obj -= cfg.wrm_gamma * float(np.sum((Z - X) ** 2, axis=1).mean())
    g = model.grad_theta(params.theta, Z, y).mean(axis=0)
    stat = float(np.linalg.norm(reg.residual(params.theta, g)))
    return obj, stat


def train(dataset, model, reg, cfg, eval_hooks=None):
    """Run cfg.iters steps of the selected algorithm.

    Returns (final params, trace). The trace records (iteration,
    objective estimate, stationarity sample) at iteration 0, every
    cfg.stride iterations, and at the final iteration; eval_hooks are
    called as hook(iteration, params) at the same points.
    """
    X, y = _as_xy(dataset)
    if cfg.batch_size > len(X):
        raise ConfigurationError(
            "batch_size %d exceeds dataset size %d" % (cfg.batch_size, len(X)))
    if reg.kind == "gamma-indicator":
        raise ConfigurationError(
            "the gamma floor is built into the trainers; pick a theta regularizer")
    hooks = list(eval_hooks) if eval_hooks else []
    step = _STEPS[cfg.algorithm]
    state = TrainerState(init_params(model, cfg), 0, [])

    def record(st):
        obj, stat = trace_row(model, X, y, reg, cfg, st.params)
        st.trace.append((st.iteration, obj, stat))
        for hook in hooks:
            hook(st.iteration, st.params)

    try:
        record(state)
        for t in range(cfg.iters):
            state = step(state, (X, y), model, reg, cfg)
            if state.iteration % cfg.stride == 0 or state.iteration == cfg.iters:
                record(state)
    except Exception as exc:
        exc.args = ("iteration %d: %s" % (state.iteration, exc),)
        raise
    return state.params, list(state.trace)
