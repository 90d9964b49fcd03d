"""Training loops: single-step algebra, determinism, and convergence.

The robust least-squares instance has a closed-form surrogate

    F(theta, gamma) = mean_i 0.5 * r0_i^2 / kappa + gamma * rho + beta |theta|^2,
    kappa = 1 - |theta|^2 / (2 gamma),   r0_i = theta . x_i - y_i,

obtained by maximizing the perturbed loss over zeta by hand (the
stationary point is zeta = x + r theta / (2 gamma)). A direct numeric
minimization of that formula is the oracle the trainer is held to.
"""

import numpy as np
import pytest
from scipy.optimize import minimize

from wassrobust.attacks import AttackConfig
from wassrobust.errors import ConfigurationError
from wassrobust.models import (
    LinearLeastSquares,
    Lipschitz,
    LogisticModel,
    LossModel,
    ModelParams,
    NoReg,
    SquaredL2,
    make_regularizer,
)
from wassrobust.robust import RobustConfig, stationarity_distance
from wassrobust.trainers import (
    TrainerConfig,
    TrainerState,
    adv_train_step,
    erm_step,
    init_params,
    spgd_step,
    spgda_step,
    train,
    wrm_step,
)
from wassrobust.transport import TransportCost
from wassrobust.utils import generator

from conftest import LinearInFeatures


class ZeroLoss(LossModel):
    """Constant loss: every gradient vanishes."""

    kind = "zero"

    def __init__(self, feature_dim):
        super().__init__(feature_dim, Lipschitz(0.0, 0.0, 0.0, 0.0))

    def loss(self, theta, X, y):
        return np.zeros(len(X))

    def grad_theta(self, theta, X, y):
        return np.zeros((len(X), len(theta)))

    def grad_features(self, theta, X, y):
        return np.zeros_like(X)


def _toy_classification(seed, n=64, d=3):
    rng = generator(seed, 0)
    w = rng.normal(size=d)
    X = rng.uniform(-1, 1, size=(n, d))
    y = (X @ w + 0.05 * rng.normal(size=n) >= 0).astype(float)
    return X, y


# --- single-step algebra ---------------------------------------------------


@pytest.mark.parametrize("step_fn", [spgd_step, spgda_step])
def test_zero_gradient_slides_gamma_only(step_fn):
    model = ZeroLoss(2)
    rho, gamma0, alpha = 0.7, 1.5, 0.1
    cfg = TrainerConfig("spgda", alpha=alpha, eta=0.05, batch_size=4, iters=1,
                        seed=3, robust=RobustConfig(rho=rho, gamma0=gamma0))
    X = generator(3, 0).uniform(-1, 1, size=(4, 2))
    y = np.zeros(4)
    params = ModelParams(np.array([0.4, -0.2]), gamma0 + 2.0)
    out = step_fn(TrainerState(params), (X, y), model, NoReg(), cfg)
    assert np.array_equal(out.params.theta, params.theta)
    assert out.params.gamma == max(params.gamma - alpha * rho, gamma0)
    # a long run pins gamma to its floor
    state = TrainerState(params)
    for _ in range(100):
        state = step_fn(state, (X, y), model, NoReg(), cfg)
    assert state.params.gamma == gamma0


def test_spgd_single_iteration_oracle_is_spgda():
    X, y = _toy_classification(11)
    model = LogisticModel(3)
    base = RobustConfig(rho=0.3, gamma0=1.0, oracle_eps=1e-300, oracle_max_iters=1)
    lazy = TrainerConfig("spgda", alpha=0.01, eta=0.05, batch_size=16, iters=40,
                         seed=5, robust=base, stride=1)
    eager = TrainerConfig("spgd", alpha=0.01, eta=0.05, batch_size=16, iters=40,
                          seed=5, robust=base, stride=1)
    seen = {"spgda": [], "spgd": []}
    _, _ = train((X, y), model, NoReg(), lazy,
                 eval_hooks=[lambda t, p: seen["spgda"].append(p.as_vector())])
    _, _ = train((X, y), model, NoReg(), eager,
                 eval_hooks=[lambda t, p: seen["spgd"].append(p.as_vector())])
    assert len(seen["spgda"]) == 41
    for a, b in zip(seen["spgda"], seen["spgd"]):
        assert np.array_equal(a, b)


def test_adv_train_with_zero_budget_is_erm():
    X, y = _toy_classification(21)
    model = LogisticModel(3)
    attack = AttackConfig("fgsm", eps_adv=0.0)
    adv = TrainerConfig("adv-train", alpha=0.05, batch_size=16, iters=60,
                        seed=9, attack=attack, stride=1)
    erm = TrainerConfig("erm", alpha=0.05, batch_size=16, iters=60,
                        seed=9, stride=1)
    iters_a, iters_e = [], []
    train((X, y), model, NoReg(), adv,
          eval_hooks=[lambda t, p: iters_a.append(p.theta)])
    train((X, y), model, NoReg(), erm,
          eval_hooks=[lambda t, p: iters_e.append(p.theta)])
    for a, b in zip(iters_a, iters_e):
        assert np.array_equal(a, b)


def test_wrm_step_matches_hand_update():
    model = LinearInFeatures(2)
    x = np.array([0.3, -0.1])
    y = np.zeros(1)
    theta = np.array([0.5, 0.25])
    gamma, alpha = 1.0, 0.1
    cfg = TrainerConfig("wrm", alpha=alpha, batch_size=1, iters=1, seed=0,
                        wrm_gamma=gamma)
    state = TrainerState(ModelParams(theta, gamma))
    out = wrm_step(state, (x[None, :], y), model, NoReg(), cfg)
    zeta = x + theta / (2 * gamma)  # ascent limit, linear loss
    want = theta - alpha * zeta  # grad_theta of this loss is the features
    assert np.allclose(out.params.theta, want, atol=1e-12)
    assert out.params.gamma == gamma


def test_erm_step_is_prox_gradient():
    X, y = _toy_classification(31, n=8)
    model = LogisticModel(3)
    reg = SquaredL2(0.3)
    cfg = TrainerConfig("erm", alpha=0.2, batch_size=8, iters=1, seed=1)
    params = ModelParams(np.array([0.1, -0.2, 0.05]), 0.0)
    out = erm_step(TrainerState(params), (X, y), model, reg, cfg)
    g = model.grad_theta(params.theta, X, y).mean(axis=0)
    want = (params.theta - 0.2 * g) / (1.0 + 2 * 0.2 * 0.3)
    assert np.allclose(out.params.theta, want, atol=1e-15)


# --- the train loop --------------------------------------------------------


def test_zero_iters_returns_initial_params():
    X, y = _toy_classification(41)
    model = LogisticModel(3)
    cfg = TrainerConfig("erm", iters=0, seed=13, batch_size=8)
    params, trace = train((X, y), model, NoReg(), cfg)
    assert np.array_equal(params.as_vector(), init_params(model, cfg).as_vector())
    assert len(trace) == 1 and trace[0][0] == 0


@pytest.mark.parametrize("iters,stride,rows", [(100, 50, 3), (101, 50, 4),
                                               (5, 2, 4), (1, 10, 2)])
def test_trace_length(iters, stride, rows):
    X, y = _toy_classification(43)
    model = LogisticModel(3)
    cfg = TrainerConfig("erm", iters=iters, stride=stride, seed=1, batch_size=16)
    _, trace = train((X, y), model, NoReg(), cfg)
    assert len(trace) == rows
    its = [r[0] for r in trace]
    assert its == sorted(set(its))


def test_fixed_seed_bitwise_reproducible():
    X, y = _toy_classification(47)
    model = LogisticModel(3)
    cfg = TrainerConfig("spgda", alpha=0.01, eta=0.05, batch_size=16, iters=80,
                        seed=17, robust=RobustConfig(rho=0.4, gamma0=1.0))
    p1, t1 = train((X, y), model, NoReg(), cfg)
    p2, t2 = train((X, y), model, NoReg(), cfg)
    assert np.array_equal(p1.as_vector(), p2.as_vector())
    assert t1 == t2


def test_init_params_range_and_gamma():
    model = LogisticModel(4)
    cfg = TrainerConfig("spgda", robust=RobustConfig(rho=1.0, gamma0=2.5), seed=99)
    p = init_params(model, cfg)
    assert p.theta.shape == (4,)
    assert np.all(np.abs(p.theta) <= 0.05)
    assert p.gamma == 3.5
    assert init_params(model, TrainerConfig("wrm", wrm_gamma=2.0)).gamma == 2.0


def test_step_errors_carry_the_iteration_index():
    X, y = _toy_classification(51)
    model = LinearLeastSquares(3, Lipschitz(None, None, 5.0, None))
    cfg = TrainerConfig("spgd", robust=RobustConfig(rho=0.5, gamma0=1.0),
                        batch_size=8, iters=3, seed=2)
    with pytest.raises(ConfigurationError, match="iteration 0"):
        train((X, y), model, NoReg(), cfg)


def test_train_rejects_gamma_indicator_as_theta_reg():
    X, y = _toy_classification(53)
    cfg = TrainerConfig("erm", iters=1, batch_size=8)
    with pytest.raises(ConfigurationError):
        train((X, y), LogisticModel(3), make_regularizer("gamma-indicator", gamma0=1.0), cfg)


def test_train_rejects_oversized_batch():
    X, y = _toy_classification(57, n=10)
    cfg = TrainerConfig("erm", iters=1, batch_size=11)
    with pytest.raises(ConfigurationError):
        train((X, y), LogisticModel(3), NoReg(), cfg)


# --- convergence -----------------------------------------------------------


def test_erm_drives_realizable_least_squares_to_zero():
    rng = generator(61, 0)
    w = np.array([1.0, -2.0, 0.5])
    X = rng.uniform(-1, 1, size=(200, 3))
    y = X @ w
    model = LinearLeastSquares(3)
    cfg = TrainerConfig("erm", alpha=0.1, batch_size=32, iters=3000, seed=7)
    params, trace = train((X, y), model, NoReg(), cfg)
    assert trace[-1][1] <= 1e-6
    assert np.allclose(params.theta, w, atol=1e-3)


def test_objective_moving_average_non_increasing():
    rng = generator(67, 0)
    X = rng.uniform(-1, 1, size=(60, 2))
    y = X @ np.array([0.8, -0.5]) + 0.1 * rng.normal(size=60)
    model = LinearLeastSquares(2)
    cfg = TrainerConfig("spgda", alpha=0.02, eta=0.05, batch_size=60, iters=600,
                        seed=3, stride=1,
                        robust=RobustConfig(rho=0.8, gamma0=2.0))
    _, trace = train((X, y), model, SquaredL2(0.05), cfg)
    objs = np.array([row[1] for row in trace])
    kernel = np.full(100, 1 / 100)
    avg = np.convolve(objs, kernel, mode="valid")
    tail = avg[60:]
    assert np.all(np.diff(tail) <= 1e-9)


def _closed_form_objective(theta, gamma, X, y, rho, beta):
    r0 = X @ theta - y
    kappa = 1.0 - float(theta @ theta) / (2.0 * gamma)
    if kappa <= 1e-9:
        return np.inf
    return float(0.5 * np.mean(r0 ** 2) / kappa + gamma * rho
                 + beta * float(theta @ theta))


def test_closed_form_objective_is_the_inner_sup():
    # the stationary point of the perturbed loss certifies the formula
    rng = generator(71, 0)
    for _ in range(10):
        theta = rng.uniform(-0.5, 0.5, size=2)
        gamma = rng.uniform(1.5, 4.0)
        x = rng.uniform(-1, 1, size=2)
        yv = rng.uniform(-1, 1)
        r = (theta @ x - yv) / (1.0 - theta @ theta / (2 * gamma))
        zeta = x + r * theta / (2 * gamma)
        grad = (theta @ zeta - yv) * theta - 2 * gamma * (zeta - x)
        assert np.linalg.norm(grad) < 1e-10
        val = 0.5 * (theta @ zeta - yv) ** 2 - gamma * float((zeta - x) @ (zeta - x))
        want = _closed_form_objective(theta, gamma, x[None, :], np.array([yv]),
                                      0.0, 0.0)
        assert abs(val - want) < 1e-10


def test_spgd_solves_robust_ridge_regression():
    rng = generator(73, 0)
    X = rng.uniform(-1, 1, size=(40, 2))
    y = X @ np.array([0.6, -0.4]) + 0.05 * rng.normal(size=40)
    rho, gamma0, beta = 1.0, 2.0, 0.1
    model = LinearLeastSquares(2)
    reg = SquaredL2(beta)
    robust = RobustConfig(rho=rho, gamma0=gamma0, oracle_eps=1e-8)
    cfg = TrainerConfig("spgd", alpha=0.05, eta=0.1, batch_size=40, iters=2000,
                        seed=29, robust=robust, stride=500)
    params, _ = train((X, y), model, reg, cfg)
    c = TransportCost()
    stat = stationarity_distance(model, params, reg, X, y, robust, c)
    assert stat <= 1e-3

    def packed(v):
        return _closed_form_objective(v[:2], gamma0 + v[2] ** 2, X, y, rho, beta)

    best = np.inf
    for start in [np.zeros(3), np.array([0.5, -0.5, 1.0]), np.array([-0.3, 0.3, 0.5])]:
        res = minimize(packed, start, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        best = min(best, res.fun)
    reached = _closed_form_objective(params.theta, params.gamma, X, y, rho, beta)
    assert reached <= best + 1e-3


def test_spgd_final_objective_not_worse_than_spgda():
    X, y = _toy_classification(83, n=60)
    model = LogisticModel(3)
    for seed in (1, 2):
        robust = RobustConfig(rho=0.5, gamma0=1.0, oracle_eps=1e-8)
        kw = dict(alpha=0.1, eta=0.2, batch_size=60, iters=600, seed=seed,
                  robust=robust, stride=600)
        _, tr_spgd = train((X, y), model, NoReg(), TrainerConfig("spgd", **kw))
        _, tr_spgda = train((X, y), model, NoReg(), TrainerConfig("spgda", **kw))
        assert tr_spgd[-1][1] <= tr_spgda[-1][1] + 1e-3


def test_gamma_feasible_after_every_step():
    X, y = _toy_classification(89)
    model = LogisticModel(3)
    gamma0 = 1.2
    cfg = TrainerConfig("spgda", alpha=0.05, eta=0.05, batch_size=16, iters=200,
                        seed=4, stride=1,
                        robust=RobustConfig(rho=2.0, gamma0=gamma0))
    gammas = []
    train((X, y), model, NoReg(), cfg,
          eval_hooks=[lambda t, p: gammas.append(p.gamma)])
    assert len(gammas) == 201
    assert min(gammas) >= gamma0
