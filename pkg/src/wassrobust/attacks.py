"""Evaluation-time adversarial example generators.

All attacks perturb features only and respect two hard invariants: the
l-infinity budget ||x_adv - x|| <= eps_adv (for the sign-based attacks)
and the clip range. Functions accept a single feature vector or a batch
of rows; the output matches the input's shape.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, InstabilityError
from .robust import grad_zeta_psi
from .transport import TransportCost

ATTACK_KINDS = ("fgsm", "ifgsm", "pgd", "wrm")


@dataclass(frozen=True)
class AttackConfig:
    kind: str
    eps_adv: float = 0.1
    steps: int = 10
    alpha_atk: Optional[float] = None  # pgd step; defaults to eps_adv / 4
    clip_lo: float = -1.0
    clip_hi: float = 1.0
    wrm_gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigurationError("unknown attack kind %r" % (self.kind,))
        if self.eps_adv < 0:
            raise ConfigurationError("eps_adv must be nonnegative")
        if self.clip_lo >= self.clip_hi:
            raise ConfigurationError("need clip_lo < clip_hi")
        if self.kind in ("ifgsm", "pgd") and self.steps < 1:
            raise ConfigurationError("%s needs steps >= 1" % self.kind)
        if self.kind == "wrm" and self.wrm_gamma <= 0:
            raise ConfigurationError("wrm_gamma must be positive")

    @property
    def step_size(self):
        return self.alpha_atk if self.alpha_atk is not None else self.eps_adv / 4.0


def _as_batch(X, y):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    Xb = X[None, :] if single else X
    yb = np.full(len(Xb), float(y)) if np.ndim(y) == 0 else np.asarray(y, dtype=float)
    return Xb, yb, single


def fgsm(model, params, X, y, cfg):
    """One signed-gradient step of size eps_adv, then clip."""
    Xb, yb, single = _as_batch(X, y)
    g = model.grad_features(params.theta, Xb, yb)
    out = np.clip(Xb + cfg.eps_adv * np.sign(g), cfg.clip_lo, cfg.clip_hi)
    return out[0] if single else out


def ifgsm(model, params, X, y, cfg):
    """steps repeats of FGSM at budget eps_adv/steps, clipping each time."""
    Xb, yb, single = _as_batch(X, y)
    step = cfg.eps_adv / cfg.steps
    out = Xb.copy()
    for _ in range(cfg.steps):
        g = model.grad_features(params.theta, out, yb)
        out = np.clip(out + step * np.sign(g), cfg.clip_lo, cfg.clip_hi)
    return out[0] if single else out


def pgd(model, params, X, y, cfg):
    """Projected gradient ascent on the loss over the eps ball around X."""
    Xb, yb, single = _as_batch(X, y)
    step = cfg.step_size
    lo = Xb - cfg.eps_adv
    hi = Xb + cfg.eps_adv
    out = Xb.copy()
    for _ in range(cfg.steps):
        g = model.grad_features(params.theta, out, yb)
        out = np.clip(out + step * np.sign(g), lo, hi)
        out = np.clip(out, cfg.clip_lo, cfg.clip_hi)
    return out[0] if single else out


def wrm_attack(model, params, X, y, cfg, c=None):
    """Gradient ascent on loss - gamma * transport cost, run to its limit.

    The ascent step defaults to 1/(2 gamma), which lands exactly on the
    maximizer for losses linear in the features. No clipping: the cost
    penalty is what keeps the point near its anchor.
    """
    c = c if c is not None else TransportCost()
    Xb, yb, single = _as_batch(X, y)
    gamma = cfg.wrm_gamma
    step = cfg.alpha_atk if cfg.alpha_atk is not None else 1.0 / (2.0 * gamma)
    Z = Xb.copy()
    limit = 10.0 * c.d0
    for _ in range(max(cfg.steps, 1)):
        g = grad_zeta_psi(model, params.theta, gamma, Xb, Z, yb, c)
        if float(np.max(np.einsum("ij,ij->i", g, g))) <= 1e-18:
            break
        Z = Z + step * g
        drift = np.linalg.norm(Z - Xb, axis=1)
        if np.any(drift > limit):
            bad = int(np.argmax(drift))
            raise InstabilityError(
                "wrm ascent diverged on sample %d (drift %.3g > %.3g); "
                "raise wrm_gamma or shrink the step" % (bad, drift[bad], limit))
    return Z[0] if single else Z


def run_attack(model, params, X, y, cfg, c=None):
    """Dispatch an attack by its configured kind."""
    if cfg.kind == "fgsm":
        return fgsm(model, params, X, y, cfg)
    if cfg.kind == "ifgsm":
        return ifgsm(model, params, X, y, cfg)
    if cfg.kind == "pgd":
        return pgd(model, params, X, y, cfg)
    return wrm_attack(model, params, X, y, cfg, c)


def evaluate_under_attack(model, params, X, y, cfg, c=None):
    """Misclassification rate on attacked test points."""
    if not model.is_classifier:
        raise ConfigurationError("attack evaluation needs a classifier")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    X_adv = run_attack(model, params, X, y, cfg, c)
    predicted = model.predict(params.theta, X_adv)
    return float(np.mean(predicted != y.astype(int)))
