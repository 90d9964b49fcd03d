"""Simulated parameter-server training rounds, fully deterministic.

The protocol is synchronous: every round the server broadcasts the
current parameters, every worker answers with one lazily maximized
minibatch gradient, and the server takes a proximal step on the
average. Messages are plain values; nothing is shared between workers,
so the result does not depend on how worker execution is interleaved.

Worker k draws its batches from stream k of the run seed. The central
trainers sample as worker 1, which is why a single-worker run here
replays the sequential algorithm's iterates exactly, bit for bit.
"""

from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np

from .errors import ConfigurationError, ProtocolError
from .models import ModelParams
from .trainers import init_params, spgda_batch_gradient, step_scale
from .utils import batch_indices, generator

_PARTITION_STREAM = 2 ** 63  # never collides with a worker id


@dataclass(frozen=True)
class Broadcast:
    round: int
    params: ModelParams


@dataclass(frozen=True)
class Report:
    round: int
    worker: int
    gradient: np.ndarray
    batch_count: int


RoundMessage = Union[Broadcast, Report]


@dataclass
class WorkerState:
    """One simulated worker: an id, its shard, and its sampling config.

    The worker's randomness is the derived stream (cfg.seed, worker_id);
    no generator object is carried so any batch can be recomputed from
    the round index alone.
    """

    worker_id: int
    features: np.ndarray
    labels: np.ndarray
    batch_size: int
    cfg: "TrainerConfig"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.worker_id < 1:
            raise ConfigurationError("worker ids start at 1")
        if len(self.features) == 0:
            raise ConfigurationError(
                "worker %d has an empty shard" % self.worker_id)
        if len(self.features) != len(self.labels):
            raise ConfigurationError(
                "worker %d shard has %d feature rows but %d labels"
                % (self.worker_id, len(self.features), len(self.labels)))
        if not 1 <= self.batch_size <= len(self.features):
            raise ConfigurationError(
                "worker %d batch size %d not in [1, %d]"
                % (self.worker_id, self.batch_size, len(self.features)))


@dataclass
class ServerState:
    params: ModelParams
    round: int
    cfg: "TrainerConfig"
    n_workers: int


def worker_round(w, broadcast, model, c):
    """Answer one broadcast with the worker's lazily maximized gradient."""
    if not isinstance(broadcast, Broadcast):
        raise ProtocolError("worker %d expected a broadcast" % w.worker_id)
    t = broadcast.round
    idx = batch_indices(len(w.features), w.batch_size, w.cfg.seed, w.worker_id, t)
    Xb, yb = w.features[idx], w.labels[idx]
    g = spgda_batch_gradient(model, broadcast.params, Xb, yb, w.cfg.robust, c,
                             w.cfg.eta * step_scale(w.cfg, t))
    return Report(t, w.worker_id, g, len(Xb))


def server_aggregate(s, reports, reg):
    """Proximal step on the worker-averaged gradient; advances the round.

    Reports are validated (right round, exactly one per worker) and then
    summed keyed by worker id, so arrival order cannot change the result.
    """
    by_worker = {}
    for r in reports:
        if r.round != s.round:
            raise ProtocolError(
                "worker %d reported for round %d during round %d"
                % (r.worker, r.round, s.round))
        if r.worker in by_worker:
            raise ProtocolError("duplicate report from worker %d" % r.worker)
        if not 1 <= r.worker <= s.n_workers:
            raise ProtocolError("report from unknown worker %d" % r.worker)
        by_worker[r.worker] = r
    for k in range(1, s.n_workers + 1):
        if k not in by_worker:
            raise ProtocolError("missing report from worker %d" % k)

    total = by_worker[1].gradient.copy()
    for k in range(2, s.n_workers + 1):
        total = total + by_worker[k].gradient
    alpha = s.cfg.alpha * step_scale(s.cfg, s.round)
    vec = s.params.as_vector() - (alpha / s.n_workers) * total
    theta = reg.prox(alpha, vec[:-1])
    params = ModelParams(theta, max(float(vec[-1]), s.cfg.robust.gamma0))
    return ServerState(params, s.round + 1, s.cfg, s.n_workers)


def _check_shards(K, shards, batch_size):
    if K < 1:
        raise ConfigurationError("need at least one worker")
    if len(shards) != K:
        raise ConfigurationError(
            "expected %d shards, got %d" % (K, len(shards)))
    for i, (X, _) in enumerate(shards):
        if batch_size > len(X):
            raise ConfigurationError(
                "batch size %d exceeds shard %d size %d"
                % (batch_size, i + 1, len(X)))


def _metrics_row(model, params, X_all, y_all, grad):
    loss = float(model.loss(params.theta, X_all, y_all).mean())
    return loss, float(np.linalg.norm(grad))


def drfl_train(K, shards, model, reg, cfg):
    """Run cfg.iters synchronous robust rounds over the given shards.

    Returns (final params, metrics): one (round, mean clean loss,
    aggregated gradient norm) row per round.
    """
    if cfg.robust is None:
        raise ConfigurationError("distributed robust training needs a robust config")
    if reg.kind == "gamma-indicator":
        raise ConfigurationError(
            "the gamma floor is built into the server step; pick a theta regularizer")
    _check_shards(K, shards, cfg.batch_size)
    workers = [WorkerState(k, X, y, cfg.batch_size, cfg)
               for k, (X, y) in enumerate(shards, start=1)]
    X_all = np.concatenate([w.features for w in workers])
    y_all = np.concatenate([w.labels for w in workers])

    state = ServerState(init_params(model, cfg), 0, cfg, K)
    metrics = []
    for t in range(cfg.iters):
        broadcast = Broadcast(t, state.params)
        reports = [worker_round(w, broadcast, model, cfg.cost) for w in workers]
        state = server_aggregate(state, reports, reg)
        mean_grad = sum(r.gradient for r in reports) / K
        metrics.append((t,) + _metrics_row(model, state.params, X_all, y_all,
                                           mean_grad))
    return state.params, metrics


def fedavg_train(K, shards, model, reg, local_epochs, cfg):
    """Local SGD epochs on the plain loss, then parameter averaging.

    The baseline never perturbs features and never touches gamma. Local
    step indices continue across rounds, so round t is epoch-aligned:
    with local_epochs=1 a worker's round t is exactly its epoch t.
    """
    if local_epochs < 1:
        raise ConfigurationError("local_epochs must be >= 1")
    _check_shards(K, shards, cfg.batch_size)
    workers = [WorkerState(k, X, y, cfg.batch_size, cfg)
               for k, (X, y) in enumerate(shards, start=1)]
    X_all = np.concatenate([w.features for w in workers])
    y_all = np.concatenate([w.labels for w in workers])

    params = init_params(model, cfg)
    metrics = []
    for t in range(cfg.iters):
        vectors = []
        for w in workers:
            n = len(w.features)
            steps_per_epoch = -(-n // w.batch_size)
            local_steps = local_epochs * steps_per_epoch
            p = params
            for j in range(local_steps):
                step_idx = t * local_steps + j
                idx = batch_indices(n, w.batch_size, cfg.seed, w.worker_id,
                                    step_idx)
                g = model.grad_theta(p.theta, w.features[idx],
                                     w.labels[idx]).mean(axis=0)
                alpha = cfg.alpha * step_scale(cfg, step_idx)
                p = p.with_theta(reg.prox(alpha, p.theta - alpha * g))
            vectors.append(p.as_vector())
        avg = vectors[0].copy()
        for v in vectors[1:]:
            avg = avg + v
        avg = avg / K
        params = ModelParams(avg[:-1], float(avg[-1]))
        g_full = model.grad_theta(params.theta, X_all, y_all).mean(axis=0)
        metrics.append((t,) + _metrics_row(model, params, X_all, y_all, g_full))
    return params, metrics


def partition(dataset, scheme, K, seed):
    """Split a dataset into K disjoint covering shards.

    iid: a seeded shuffle cut into near-equal slices (the first n % K
    shards take one extra item). one-class-per-worker: worker k holds
    items of class (k mod #classes) only, class members divided among
    the workers that share the class; requires K >= #classes so every
    class is held by someone.
    """
    X = getattr(dataset, "features", None)
    if X is not None:
        y = dataset.labels
    else:
        X, y = dataset
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(X)
    if K < 1:
        raise ConfigurationError("need at least one shard")
    if K > n:
        raise ConfigurationError("cannot cut %d items into %d shards" % (n, K))
    rng = generator(seed, _PARTITION_STREAM)

    if scheme == "iid":
        order = rng.permutation(n)
        sizes = np.full(K, n // K)
        sizes[:n % K] += 1
        shards = []
        start = 0
        for size in sizes:
            idx = order[start:start + size]
            shards.append((X[idx], y[idx]))
            start += size
        return shards

    if scheme == "one-class-per-worker":
        classes = np.unique(y)
        if K < len(classes):
            raise ConfigurationError(
                "%d workers cannot cover %d classes one class each"
                % (K, len(classes)))
        holders = [[] for _ in classes]  # worker slots per class
        for k in range(1, K + 1):
            holders[k % len(classes)].append(k)
        shards = [None] * K
        for ci, cls in enumerate(classes):
            members = np.flatnonzero(y == cls)
            members = members[rng.permutation(len(members))]
            ws = holders[ci]
            if len(members) < len(ws):
                raise ConfigurationError(
                    "class %g has %d items for %d workers"
                    % (cls, len(members), len(ws)))
            for slot, chunk in enumerate(np.array_split(members, len(ws))):
                shards[ws[slot] - 1] = (X[chunk], y[chunk])
        return shards

    raise ConfigurationError("unknown partition scheme %r" % (scheme,))
