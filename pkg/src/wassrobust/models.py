"""Parametric losses with hand-written gradients, and proximal regularizers.

Models evaluate batches: `X` is an (n, d) array of feature rows and `y` an
(n,) array of targets. Per-sample quantities come back stacked, so a single
datum is just a one-row batch. All losses are nonnegative and smooth in
both the weights and the features, which the robust layer relies on.

Parameters travel as a `ModelParams` pair: the model weights `theta` and
the dual variable `gamma` used by the robust surrogate. The flattened
form appends gamma after theta.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError


@dataclass(frozen=True)
class Datum:
    """One sample: feature vector x and scalar target y."""

    x: np.ndarray
    y: float


@dataclass(frozen=True)
class ModelParams:
    """Model weights plus the dual variable of the robust surrogate."""

    theta: np.ndarray
    gamma: float

    def as_vector(self):
        """Flatten to [theta..., gamma]."""
        return np.append(np.asarray(self.theta, dtype=float), self.gamma)

    @staticmethod
    def from_vector(vec):
        vec = np.asarray(vec, dtype=float)
        return ModelParams(theta=vec[:-1].copy(), gamma=float(vec[-1]))

    def with_theta(self, theta):
        return replace(self, theta=theta)

    def with_gamma(self, gamma):
        return replace(self, gamma=float(gamma))


@dataclass(frozen=True)
class Lipschitz:
    """Smoothness bounds for a loss; None marks an unknown constant.

    l_tt bounds the weight-gradient's sensitivity to weights, l_tz its
    sensitivity to features; l_zz and l_zt are the analogues for the
    feature gradient.
    """

    l_tt: Optional[float] = None
    l_tz: Optional[float] = None
    l_zz: Optional[float] = None
    l_zt: Optional[float] = None


def _check_batch(model, theta, X, y):
    theta = np.asarray(theta, dtype=float)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if theta.shape != (model.param_dim,):
        raise ConfigurationError(
            "expected %d parameters, got shape %s" % (model.param_dim, theta.shape))
    if X.ndim != 2 or X.shape[1] != model.feature_dim:
        raise ConfigurationError(
            "expected features of shape (n, %d), got %s" % (model.feature_dim, X.shape))
    if y.shape != (X.shape[0],):
        raise ConfigurationError(
            "expected %d targets, got shape %s" % (X.shape[0], y.shape))
    return theta, X, y


class LossModel:
    """Base class: batched loss, weight gradient, and feature gradient."""

    kind = None
    is_classifier = False

    def __init__(self, feature_dim, lipschitz=None):
        if feature_dim < 1:
            raise ConfigurationError("feature_dim must be >= 1")
        self.feature_dim = int(feature_dim)
        self.lipschitz = lipschitz if lipschitz is not None else Lipschitz()

    @property
    def param_dim(self):
        return self.feature_dim

    def loss(self, theta, X, y):
        """Per-sample losses, shape (n,)."""
        raise NotImplementedError

    def grad_theta(self, theta, X, y):
        """Per-sample loss gradients in the weights, shape (n, param_dim)."""
        raise NotImplementedError

    def grad_features(self, theta, X, y):
        """Per-sample loss gradients in the features, shape (n, feature_dim)."""
        raise NotImplementedError

    def decision_function(self, theta, X):
        raise NotImplementedError

    def predict(self, theta, X):
        """Hard labels in {0, 1}; ties go to class 1."""
        if not self.is_classifier:
            raise ConfigurationError("%s is not a classifier" % self.kind)
        return (self.decision_function(theta, X) >= 0.0).astype(int)


class LinearLeastSquares(LossModel):
    """Squared-error loss 0.5 * (theta . x - y)^2 for regression."""

    kind = "linear-least-squares"

    def loss(self, theta, X, y):
        theta, X, y = _check_batch(self, theta, X, y)
        r = X @ theta - y
        return 0.5 * r * r

    def grad_theta(self, theta, X, y):
        theta, X, y = _check_batch(self, theta, X, y)
        r = X @ theta - y
        return r[:, None] * X

    def grad_features(self, theta, X, y):
        theta, X, y = _check_batch(self, theta, X, y)
        r = X @ theta - y
        return r[:, None] * theta[None, :]

    def decision_function(self, theta, X):
        return np.asarray(X, dtype=float) @ np.asarray(theta, dtype=float)


class LogisticModel(LossModel):
    """Binary cross-entropy on a linear logit, labels in {0, 1}."""

    kind = "logistic"
    is_classifier = True

    def loss(self, theta, X, y):
        theta, X, y = _check_batch(self, theta, X, y)
        t = X @ theta
        # log(1 + e^t) - y t, computed without overflow
        return np.logaddexp(0.0, t) - y * t

    def grad_theta(self, theta, X, y):
        theta, X, y = _check_batch(self, theta, X, y)
        e = expit(X @ theta) - y
        return e[:, None] * X

    def grad_features(self, theta, X, y):
        theta, X, y = _check_batch(self, theta, X, y)
        e = expit(X @ theta) - y
        return e[:, None] * theta[None, :]

    def decision_function(self, theta, X):
        return np.asarray(X, dtype=float) @ np.asarray(theta, dtype=float)


class TinyMLP(LossModel):
    """One-hidden-layer classifier with softplus units and a BCE loss.

    The smooth activation keeps the loss twice differentiable in the
    features, but no closed-form smoothness constants are published for
    it, so `lipschitz` stays all-None unless the caller supplies bounds.
    """

    kind = "tiny-mlp"
    is_classifier = True

    def __init__(self, feature_dim, hidden, lipschitz=None):
        super().__init__(feature_dim, lipschitz)
        if hidden < 1:
            raise ConfigurationError("hidden must be >= 1")
        self.hidden = int(hidden)

    @property
    def param_dim(self):
        h, d = self.hidden, self.feature_dim
        return h * d + h + h + 1

    def unpack(self, theta):
        """Split the flat parameter vector into (W1, b1, w2, b2)."""
        h, d = self.hidden, self.feature_dim
        theta = np.asarray(theta, dtype=float)
        W1 = theta[:h * d].reshape(h, d)
        b1 = theta[h * d:h * d + h]
        w2 = theta[h * d + h:h * d + 2 * h]
        b2 = theta[-1]
        return W1, b1, w2, b2

    @staticmethod
    def pack(W1, b1, w2, b2):
        return np.concatenate([np.ravel(W1), b1, w2, [float(b2)]])

    def _forward(self, theta, X):
        W1, b1, w2, b2 = self.unpack(theta)
        A = X @ W1.T + b1
        U = np.logaddexp(0.0, A)  # softplus
        t = U @ w2 + b2
        return A, U, t

    def loss(self, theta, X, y):
        theta, X, y = _check_batch(self, theta, X, y)
        _, _, t = self._forward(theta, X)
        return np.logaddexp(0.0, t) - y * t

    def grad_theta(self, theta, X, y):
        theta, X, y = _check_batch(self, theta, X, y)
        W1, b1, w2, b2 = self.unpack(theta)
        A = X @ W1.T + b1
        U = np.logaddexp(0.0, A)
        t = U @ w2 + b2
        e = expit(t) - y
        dA = (e[:, None] * w2[None, :]) * expit(A)  # softplus' = sigmoid
        gW1 = np.einsum("nh,nd->nhd", dA, X).reshape(len(X), -1)
        gw2 = e[:, None] * U
        return np.concatenate([gW1, dA, gw2, e[:, None]], axis=1)

    def grad_features(self, theta, X, y):
        theta, X, y = _check_batch(self, theta, X, y)
        W1, b1, w2, b2 = self.unpack(theta)
        A = X @ W1.T + b1
        e = expit((np.logaddexp(0.0, A)) @ w2 + b2) - y
        dA = (e[:, None] * w2[None, :]) * expit(A)
        return dA @ W1

    def decision_function(self, theta, X):
        _, _, t = self._forward(theta, np.asarray(X, dtype=float))
        return t


def linear_lipschitz(theta_radius, x_radius, y_radius):
    """Closed-form smoothness bounds for squared error on a bounded domain."""
    cross = theta_radius * x_radius + (theta_radius * x_radius + y_radius)
    return Lipschitz(l_tt=x_radius ** 2, l_tz=cross,
                     l_zz=theta_radius ** 2, l_zt=cross)


def logistic_lipschitz(theta_radius, x_radius):
    """Closed-form smoothness bounds for the logistic loss on a bounded domain."""
    return Lipschitz(l_tt=0.25 * x_radius ** 2,
                     l_tz=0.25 * theta_radius * x_radius + 1.0,
                     l_zz=0.25 * theta_radius ** 2,
                     l_zt=0.25 * theta_radius * x_radius + 1.0)


# single-datum forms of the batched operations

def loss_at(model, params, z):
    return float(model.loss(params.theta, z.x[None, :], np.array([z.y]))[0])


def grad_theta_at(model, params, z):
    return model.grad_theta(params.theta, z.x[None, :], np.array([z.y]))[0]


def grad_features_at(model, params, z):
    return model.grad_features(params.theta, z.x[None, :], np.array([z.y]))[0]


class Regularizer:
    """Base regularizer: value, proximal map, and a stationarity residual.

    `prox` acts coordinatewise on plain arrays. Given a ModelParams it
    applies to the theta block and leaves gamma untouched; the gamma
    floor is a separate concern handled by `GammaIndicator` or by the
    trainers directly.
    """

    kind = None

    def value(self, v):
        raise NotImplementedError

    def prox(self, alpha, v):
        raise NotImplementedError

    def residual(self, theta, grad):
        """Coordinatewise distance from -grad to the subdifferential."""
        raise NotImplementedError

    def _split(self, v):
        if isinstance(v, ModelParams):
            return np.asarray(v.theta, dtype=float), v
        return np.asarray(v, dtype=float), None


class NoReg(Regularizer):
    kind = "none"

    def value(self, v):
        return 0.0

    def prox(self, alpha, v):
        arr, params = self._split(v)
        out = arr.copy()
        return params.with_theta(out) if params is not None else out

    def residual(self, theta, grad):
        return np.abs(grad)


class L1(Regularizer):
    """beta * ||theta||_1; prox is soft thresholding at alpha*beta."""

    kind = "l1"

    def __init__(self, beta):
        if beta < 0:
            raise ConfigurationError("l1 strength must be >= 0")
        self.beta = float(beta)

    def value(self, v):
        arr, _ = self._split(v)
        return self.beta * float(np.sum(np.abs(arr)))

    def prox(self, alpha, v):
        arr, params = self._split(v)
        t = alpha * self.beta
        out = np.sign(arr) * np.maximum(np.abs(arr) - t, 0.0)
        return params.with_theta(out) if params is not None else out

    def residual(self, theta, grad):
        # min-norm element of grad + beta * sign interval, coordinatewise
        on = np.abs(grad + self.beta * np.sign(theta))
        off = np.maximum(np.abs(grad) - self.beta, 0.0)
        return np.where(theta != 0.0, on, off)


class SquaredL2(Regularizer):
    """beta * ||theta||_2^2; prox shrinks by 1 / (1 + 2 alpha beta)."""

    kind = "squared-l2"

    def __init__(self, beta):
        if beta < 0:
            raise ConfigurationError("squared-l2 strength must be >= 0")
        self.beta = float(beta)

    def value(self, v):
        arr, _ = self._split(v)
        return self.beta * float(arr @ arr)

    def prox(self, alpha, v):
        arr, params = self._split(v)
        out = arr / (1.0 + 2.0 * alpha * self.beta)
        return params.with_theta(out) if params is not None else out

    def residual(self, theta, grad):
        return np.abs(grad + 2.0 * self.beta * theta)


class GammaIndicator(Regularizer):
    """Indicator of {gamma >= gamma0} on the dual coordinate.

    On a flat vector the last entry is treated as gamma; the rest pass
    through unchanged. The prox is the floor max(gamma, gamma0).
    """

    kind = "gamma-indicator"

    def __init__(self, gamma0):
        self.gamma0 = float(gamma0)

    def value(self, v):
        if isinstance(v, ModelParams):
            g = v.gamma
        else:
            g = float(np.asarray(v, dtype=float)[-1])
        return 0.0 if g >= self.gamma0 else np.inf

    def prox(self, alpha, v):
        if isinstance(v, ModelParams):
            return v.with_gamma(max(v.gamma, self.gamma0))
        out = np.asarray(v, dtype=float).copy()
        out[-1] = max(out[-1], self.gamma0)
        return out

    def residual(self, theta, grad):
        raise ConfigurationError(
            "gamma-indicator has no theta-block residual; use gamma_residual")


def make_regularizer(kind, beta=0.0, gamma0=0.0):
    if kind == "none":
        return NoReg()
    if kind == "l1":
        return L1(beta)
    if kind == "squared-l2":
        return SquaredL2(beta)
    if kind == "gamma-indicator":
        return GammaIndicator(gamma0)
    raise ConfigurationError("unknown regularizer kind %r" % (kind,))


def gamma_residual(gamma, grad_gamma, gamma0, tol=1e-12):
    """Distance from -grad_gamma to the normal cone of {gamma >= gamma0}.

    Strictly inside the region the cone is {0}; on the boundary it is the
    nonpositive ray, which absorbs any push toward smaller gamma.
    """
    if gamma > gamma0 + tol:
        return abs(grad_gamma)
    return max(-grad_gamma, 0.0)
