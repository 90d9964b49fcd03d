"""Shared test helpers: a loss that is exactly linear in the features."""

import numpy as np

from wassrobust.models import Lipschitz, LossModel


class LinearInFeatures(LossModel):
    """loss = theta . x + offset; gradient in x is constant.

    Handy because the inner maximization has the closed form
    zeta* = x + theta / (2 gamma) under the squared-l2 cost. The offset
    keeps the loss nonnegative on the domains tests use.
    """

    kind = "linear-in-features"

    def __init__(self, feature_dim, offset=100.0):
        super().__init__(feature_dim,
                         Lipschitz(l_tt=0.0, l_tz=1.0, l_zz=0.0, l_zt=1.0))
        self.offset = float(offset)

    def loss(self, theta, X, y):
        return np.asarray(X, dtype=float) @ np.asarray(theta, dtype=float) + self.offset

    def grad_theta(self, theta, X, y):
        return np.asarray(X, dtype=float).copy()

    def grad_features(self, theta, X, y):
        X = np.asarray(X, dtype=float)
        return np.tile(np.asarray(theta, dtype=float), (len(X), 1))
