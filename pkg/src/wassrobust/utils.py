"""Seeding, batching, and environment helpers.

Every random draw in the package flows through a numpy Generator built by
`generator(seed, stream)`, so a run is reproducible bit for bit from its
seed. The stream convention is shared by the central trainers and the
federated workers: stream 0 initialises parameters, stream k >= 1 drives
worker k's minibatch sampling, and a central trainer samples as worker 1.
Keeping the rule in one place is what makes a single-worker federated run
coincide exactly with the matching sequential algorithm.
"""

import os

import numpy as np

from .errors import ConfigurationError

_GOLDEN = 0x9E3779B97F4A7C15
_MASK = 0xFFFFFFFFFFFFFFFF


def hash64(*parts):
    """Mix integers into one 64-bit value (splitmix64 finaliser chain)."""
    h = 0
    for part in parts:
        h = (h + _GOLDEN + (int(part) & _MASK)) & _MASK
        z = h
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        h = z ^ (z >> 31)
    return h


def generator(seed, *stream):
    """Generator for one logical random stream of a run."""
    return np.random.Generator(np.random.PCG64(hash64(seed, *stream)))


def max_threads():
    """Worker-parallelism cap from WASSROBUST_THREADS (default 1)."""
    raw = os.environ.get("WASSROBUST_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(
            "WASSROBUST_THREADS must be an integer, got %r" % raw)
    if n < 1:
        raise ConfigurationError("WASSROBUST_THREADS must be >= 1, got %d" % n)
    return n


def batch_indices(n, batch_size, seed, stream, step):
    """Minibatch indices for one optimisation step.

    Batches are drawn without replacement within an epoch and the
    permutation is reshuffled each epoch. The permutation for epoch e is
    derived from (seed, stream, e), so the batch for any step is a pure
    function of the run seed and the step index: a federated worker and a
    sequential trainer that share a stream see identical batches, and the
    final (possibly short) batch of an epoch needs no carried cursor.
    """
    if not 1 <= batch_size <= n:
        raise ConfigurationError(
            "batch size must be in [1, %d], got %d" % (n, batch_size))
    steps_per_epoch = -(-n // batch_size)
    epoch, slot = divmod(int(step), steps_per_epoch)
    order = generator(seed, stream, epoch).permutation(n)
    lo = slot * batch_size
    return order[lo:lo + batch_size]
