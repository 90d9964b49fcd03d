"""Central finite differences, used by the grad-check command."""

import numpy as np


def central_difference(f, x, step=1e-5):
    """Componentwise central-difference estimate of grad f at x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g
