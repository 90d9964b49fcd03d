"""scikit-learn compatible facade over the robust trainers."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .models import LogisticModel, make_regularizer
from .robust import RobustConfig
from .trainers import TrainerConfig, train

_FACADE_ALGORITHMS = ("spgda", "spgd", "erm", "wrm")


class WassersteinRobustClassifier(BaseEstimator, ClassifierMixin):
    """Binary logistic classifier trained against distribution shift.

    A thin adapter: hyperparameters are stored verbatim (sklearn
    convention), fit builds the model and configs and runs the chosen
    trainer, predict maps the sign of the decision function back onto
    the original class labels.
    """

    def __init__(self, algorithm="spgda", rho=1.0, gamma0=1.0, alpha=0.001,
                 eta=0.02, batch_size=128, iters=1000, reg="none", beta=0.0,
                 wrm_gamma=1.0, seed=0):
        self.algorithm = algorithm
        self.rho = rho
        self.gamma0 = gamma0
        self.alpha = alpha
        self.eta = eta
        self.batch_size = batch_size
        self.iters = iters
        self.reg = reg
        self.beta = beta
        self.wrm_gamma = wrm_gamma
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        if self.algorithm not in _FACADE_ALGORITHMS:
            raise ValueError("algorithm must be one of %s"
                             % (_FACADE_ALGORITHMS,))
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) != 2:
            raise ValueError("expected exactly 2 classes, got %d"
                             % len(self.classes_))
        cfg = TrainerConfig(
            self.algorithm, alpha=self.alpha, eta=self.eta,
            batch_size=min(self.batch_size, len(X)), iters=self.iters,
            seed=self.seed, wrm_gamma=self.wrm_gamma,
            robust=RobustConfig(rho=self.rho, gamma0=self.gamma0))
        model = LogisticModel(X.shape[1])
        reg = make_regularizer(self.reg, beta=self.beta)
        self.params_, self.trace_ = train(
            (X, encoded.astype(float)), model, reg, cfg)
        self.model_ = model
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError("X has %d features, expected %d"
                             % (X.shape[1], self.n_features_in_))
        return self.model_.decision_function(self.params_.theta, X)

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[(scores >= 0.0).astype(int)]
