"""Protocol safety, exact single-worker correspondence, partitioners."""

import numpy as np
import pytest

from wassrobust.errors import ConfigurationError, ProtocolError
from wassrobust.federated import (
    Broadcast,
    Report,
    ServerState,
    WorkerState,
    drfl_train,
    fedavg_train,
    partition,
    server_aggregate,
    worker_round,
)
from wassrobust.models import LogisticModel, ModelParams, NoReg
from wassrobust.robust import RobustConfig, perturbed_gradient
from wassrobust.trainers import TrainerConfig, init_params, train
from wassrobust.transport import TransportCost
from wassrobust.utils import batch_indices, generator

from test_trainers import ZeroLoss, _toy_classification


def _robust_cfg(**kw):
    base = dict(alpha=0.02, eta=0.05, batch_size=16, iters=10, seed=7,
                robust=RobustConfig(rho=0.4, gamma0=1.0))
    base.update(kw)
    return TrainerConfig("spgda", **base)


# --- worker ----------------------------------------------------------------


def test_worker_zero_gradient_reports_rho_block():
    cfg = _robust_cfg(batch_size=4)
    model = ZeroLoss(2)
    X = generator(1, 0).uniform(-1, 1, size=(8, 2))
    w = WorkerState(1, X, np.zeros(8), 4, cfg)
    report = worker_round(w, Broadcast(0, ModelParams(np.ones(2), 2.0)),
                          model, cfg.cost)
    assert np.array_equal(report.gradient, np.array([0.0, 0.0, 0.4]))
    assert report.batch_count == 4 and report.worker == 1 and report.round == 0


def test_identical_workers_report_identically():
    cfg = _robust_cfg(batch_size=8)
    model = LogisticModel(3)
    X, y = _toy_classification(3, n=24)
    params = ModelParams(np.array([0.2, -0.1, 0.4]), 1.5)
    a = WorkerState(2, X, y, 8, cfg)
    b = WorkerState(2, X.copy(), y.copy(), 8, cfg)
    ra = worker_round(a, Broadcast(5, params), model, cfg.cost)
    rb = worker_round(b, Broadcast(5, params), model, cfg.cost)
    assert np.array_equal(ra.gradient, rb.gradient)


def test_worker_report_matches_hand_computed_lazy_gradient():
    cfg = _robust_cfg(batch_size=6)
    model = LogisticModel(3)
    X, y = _toy_classification(5, n=18)
    params = ModelParams(np.array([0.3, 0.1, -0.2]), 2.0)
    w = WorkerState(4, X, y, 6, cfg)
    t = 3
    report = worker_round(w, Broadcast(t, params), model, cfg.cost)

    idx = batch_indices(18, 6, cfg.seed, 4, t)
    Xb, yb = X[idx], y[idx]
    Z = Xb + cfg.eta * model.grad_features(params.theta, Xb, yb)
    want = np.append(model.grad_theta(params.theta, Z, yb).mean(axis=0),
                     cfg.robust.rho - np.mean(np.sum((Z - Xb) ** 2, axis=1)))
    assert np.allclose(report.gradient, want, rtol=0, atol=1e-15)


def test_worker_rejects_empty_shard_and_bad_batch():
    cfg = _robust_cfg()
    with pytest.raises(ConfigurationError):
        WorkerState(1, np.zeros((0, 2)), np.zeros(0), 1, cfg)
    with pytest.raises(ConfigurationError):
        WorkerState(1, np.zeros((4, 2)), np.zeros(4), 5, cfg)
    with pytest.raises(ConfigurationError):
        WorkerState(0, np.zeros((4, 2)), np.zeros(4), 2, cfg)


def test_worker_round_wants_a_broadcast():
    cfg = _robust_cfg(batch_size=2)
    w = WorkerState(1, np.zeros((4, 2)), np.zeros(4), 2, cfg)
    bad = Report(0, 1, np.zeros(3), 2)
    with pytest.raises(ProtocolError):
        worker_round(w, bad, LogisticModel(2), cfg.cost)


# --- server ----------------------------------------------------------------


def _server(K=3, round_=4):
    cfg = _robust_cfg()
    return ServerState(ModelParams(np.array([0.1, -0.3, 0.2]), 1.7), round_,
                       cfg, K)


def test_aggregate_zero_reports_leave_params_alone():
    s = _server()
    reports = [Report(4, k, np.zeros(4), 16) for k in (1, 2, 3)]
    out = server_aggregate(s, reports, NoReg())
    assert np.array_equal(out.params.as_vector(), s.params.as_vector())
    assert out.round == 5


def test_aggregate_order_invariant():
    s = _server()
    rng = generator(11, 0)
    grads = {k: rng.normal(size=4) for k in (1, 2, 3)}
    fwd = [Report(4, k, grads[k], 16) for k in (1, 2, 3)]
    rev = [Report(4, k, grads[k], 16) for k in (3, 1, 2)]
    a = server_aggregate(s, fwd, NoReg())
    b = server_aggregate(s, rev, NoReg())
    assert np.array_equal(a.params.as_vector(), b.params.as_vector())


def test_aggregate_protocol_errors():
    s = _server()
    ok = {k: Report(4, k, np.zeros(4), 16) for k in (1, 2, 3)}
    with pytest.raises(ProtocolError, match="round 3"):
        server_aggregate(s, [Report(3, 1, np.zeros(4), 16), ok[2], ok[3]], NoReg())
    with pytest.raises(ProtocolError, match="duplicate report from worker 2"):
        server_aggregate(s, [ok[1], ok[2], Report(4, 2, np.zeros(4), 16)], NoReg())
    with pytest.raises(ProtocolError, match="missing report from worker 3"):
        server_aggregate(s, [ok[1], ok[2]], NoReg())
    with pytest.raises(ProtocolError, match="unknown worker 9"):
        server_aggregate(s, [ok[1], ok[2], Report(4, 9, np.zeros(4), 16)], NoReg())


def test_aggregate_respects_gamma_floor():
    s = _server(K=1, round_=0)
    push = np.array([0.0, 0.0, 0.0, 50.0])  # hard shove downward on gamma
    out = server_aggregate(s, [Report(0, 1, push, 16)], NoReg())
    assert out.params.gamma == s.cfg.robust.gamma0


# --- end-to-end rounds ------------------------------------------------------


def test_drfl_single_worker_replays_spgda_bitwise():
    X, y = _toy_classification(13, n=48)
    model = LogisticModel(3)
    for iters in (1, 5, 37):
        cfg = _robust_cfg(iters=iters, batch_size=16, seed=21)
        fed_params, metrics = drfl_train(1, [(X, y)], model, NoReg(), cfg)
        central_params, _ = train((X, y), model, NoReg(), cfg)
        assert np.array_equal(fed_params.as_vector(), central_params.as_vector())
        assert len(metrics) == iters


def test_drfl_identical_constant_shards_match_single_worker():
    # every row equal, so every batch is equal and the average of equal
    # reports is the single report
    x = np.array([0.25, -0.5])
    X = np.tile(x, (12, 1))
    y = np.ones(12)
    model = LogisticModel(2)
    cfg = _robust_cfg(iters=20, batch_size=4, seed=5)
    p1, _ = drfl_train(1, [(X, y)], model, NoReg(), cfg)
    p3, _ = drfl_train(3, [(X, y), (X.copy(), y.copy()), (X.copy(), y.copy())],
                       model, NoReg(), cfg)
    assert np.allclose(p1.as_vector(), p3.as_vector(), rtol=0, atol=1e-15)


def test_drfl_gamma_feasible_and_deterministic():
    X, y = _toy_classification(17, n=40)
    model = LogisticModel(3)
    cfg = _robust_cfg(iters=60, batch_size=10, seed=9,
                      robust=RobustConfig(rho=3.0, gamma0=1.2))
    shards = partition((X, y), "iid", 2, seed=9)
    p1, m1 = drfl_train(2, shards, model, NoReg(), cfg)
    p2, m2 = drfl_train(2, shards, model, NoReg(), cfg)
    assert np.array_equal(p1.as_vector(), p2.as_vector())
    assert m1 == m2
    assert p1.gamma >= 1.2


def test_fedavg_single_worker_single_epoch_is_erm():
    X, y = _toy_classification(19, n=32)
    model = LogisticModel(3)
    rounds, spe = 6, 4  # 32 items / batch 8
    fed_cfg = TrainerConfig("erm", alpha=0.05, batch_size=8, iters=rounds, seed=3)
    erm_cfg = TrainerConfig("erm", alpha=0.05, batch_size=8,
                            iters=rounds * spe, seed=3)
    fed_params, metrics = fedavg_train(1, [(X, y)], model, NoReg(), 1, fed_cfg)
    central_params, _ = train((X, y), model, NoReg(), erm_cfg)
    assert np.array_equal(fed_params.as_vector(), central_params.as_vector())
    assert len(metrics) == rounds


def test_fedavg_identical_full_batch_shards_track_central():
    X, y = _toy_classification(23, n=20)
    model = LogisticModel(3)
    cfg = TrainerConfig("erm", alpha=0.05, batch_size=20, iters=15, seed=31)
    p_fed, _ = fedavg_train(3, [(X, y)] * 3, model, NoReg(), 1, cfg)
    p_cen, _ = train((X, y), model, NoReg(), cfg)
    assert np.allclose(p_fed.as_vector(), p_cen.as_vector(), atol=1e-10)


def test_fedavg_zero_gradients_keep_params():
    model = ZeroLoss(2)
    X = np.zeros((10, 2))
    cfg = TrainerConfig("erm", alpha=0.1, batch_size=5, iters=8, seed=2)
    params, _ = fedavg_train(2, [(X[:5], np.zeros(5)), (X[5:], np.zeros(5))],
                             model, NoReg(), 2, cfg)
    assert np.array_equal(params.theta, init_params(model, cfg).theta)


def test_drfl_shard_count_must_match():
    X, y = _toy_classification(29, n=20)
    cfg = _robust_cfg(batch_size=5)
    with pytest.raises(ConfigurationError):
        drfl_train(2, [(X, y)], LogisticModel(3), NoReg(), cfg)


# --- partition --------------------------------------------------------------


def test_partition_iid_sizes():
    X = np.arange(20, dtype=float).reshape(10, 2)
    y = np.arange(10, dtype=float)
    shards = partition((X, y), "iid", 2, seed=1)
    assert [len(s[0]) for s in shards] == [5, 5]
    shards = partition((X, y), "iid", 3, seed=1)
    assert sorted(len(s[0]) for s in shards) == [3, 3, 4]


def test_partition_union_is_the_dataset():
    rng = generator(37, 0)
    X = rng.normal(size=(23, 3))
    y = rng.integers(0, 3, size=23).astype(float)
    for scheme, K in [("iid", 4), ("one-class-per-worker", 5)]:
        shards = partition((X, y), scheme, K, seed=2)
        rows = np.concatenate([np.column_stack([sx, sy]) for sx, sy in shards])
        whole = np.column_stack([X, y])
        assert rows.shape == whole.shape
        order_a = np.lexsort(rows.T)
        order_b = np.lexsort(whole.T)
        assert np.allclose(rows[order_a], whole[order_b])


def test_partition_one_class_is_label_pure():
    rng = generator(41, 0)
    X = rng.normal(size=(30, 2))
    y = np.repeat([0.0, 1.0, 2.0], 10)
    shards = partition((X, y), "one-class-per-worker", 3, seed=3)
    labels = [np.unique(sy) for _, sy in shards]
    assert all(len(u) == 1 for u in labels)
    assert sorted(float(u[0]) for u in labels) == [0.0, 1.0, 2.0]
    # more workers than classes still covers, shards stay pure
    shards = partition((X, y), "one-class-per-worker", 5, seed=3)
    assert all(len(np.unique(sy)) == 1 for _, sy in shards)


def test_partition_errors():
    X = np.zeros((4, 2))
    y = np.array([0.0, 0.0, 1.0, 1.0])
    with pytest.raises(ConfigurationError):
        partition((X, y), "iid", 5, seed=0)
    with pytest.raises(ConfigurationError):
        partition((X, y), "one-class-per-worker", 1, seed=0)
    with pytest.raises(ConfigurationError):
        partition((X, y), "halves", 2, seed=0)
