"""The robust surrogate: perturbed loss, inner maximization, and duality.

The surrogate of interest is an average over samples of

    sup_zeta  psi(theta, gamma, zeta; z)   with
    psi = loss(theta; (zeta, y)) + gamma * (rho - c(x, zeta)),

which is strongly concave in zeta once gamma is large enough, so the sup
is reachable by plain gradient ascent with a certificate: when the ascent
gradient satisfies ||g||^2 <= 2*lam*eps, strong concavity bounds the value
gap by eps. All inner maximizations here run batched, one row per sample,
with per-row stopping; the single-sample entry points wrap one-row
batches. SPGDA's single ascent step reuses the same step helper, so a
budget-one oracle and the direct formula produce identical floats.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InstabilityError
from .models import gamma_residual
from .transport import DiscreteDistribution, worst_case_primal

_GOLDEN_RATIO = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class RobustConfig:
    """Knobs of the robust surrogate and its inner oracle."""

    rho: float
    gamma0: float
    oracle_eps: float = 1e-6
    oracle_step: float = 0.02
    oracle_max_iters: int = 1000

    def __post_init__(self):
        if self.rho < 0:
            raise ConfigurationError("rho must be nonnegative")
        if self.oracle_eps <= 0:
            raise ConfigurationError("oracle_eps must be positive")
        if self.oracle_step <= 0:
            raise ConfigurationError("oracle_step must be positive")
        if self.oracle_max_iters < 1:
            raise ConfigurationError("oracle_max_iters must be >= 1")


def concavity_margin(model, gamma, cfg, c):
    """Strong-concavity modulus lam of zeta -> psi, or a configured proxy.

    With a known curvature bound l_zz the margin is mu*gamma - l_zz and a
    nonpositive value is a configuration error. Without one (tiny-mlp) the
    caller's gamma0 stands in: the guard assumes the floor was chosen high
    enough that mu*gamma0 dominates the unknown curvature.
    """
    l_zz = model.lipschitz.l_zz
    if l_zz is not None:
        lam0 = c.mu * cfg.gamma0 - l_zz
        if lam0 <= 0:
            raise ConfigurationError(
                "gamma0=%g is not above L_zz/mu=%g; inner problem may not be concave"
                % (cfg.gamma0, l_zz / c.mu))
        lam = c.mu * gamma - l_zz
        if lam <= 0:
            raise ConfigurationError(
                "gamma=%g leaves no concavity margin (L_zz=%g, mu=%g)"
                % (gamma, l_zz, c.mu))
        return lam
    return c.mu * cfg.gamma0


def psi_batch(model, theta, gamma, X0, Z, y, rho, c):
    """Per-sample perturbed loss at perturbations Z of anchors X0."""
    costs = np.sum((Z - X0) ** 2, axis=1) if c.p == 2.0 else \
        np.asarray([c(x0, z) for x0, z in zip(X0, Z)])
    return model.loss(theta, Z, y) + gamma * (rho - costs)


def psi(model, params, zeta, z, rho, c):
    """Perturbed loss for a single datum."""
    zeta = np.asarray(zeta, dtype=float)
    val = model.loss(params.theta, zeta[None, :], np.array([z.y]))[0]
    return float(val + params.gamma * (rho - c(z.x, zeta)))


def grad_zeta_psi(model, theta, gamma, X0, Z, y, c):
    """Rows of the ascent gradient of psi in zeta."""
    return model.grad_features(theta, Z, y) - gamma * c.grad_zeta(X0, Z)


def ascent_step(model, theta, gamma, X0, Z, y, c, eta):
    """One gradient-ascent step on every row of Z."""
    return Z + eta * grad_zeta_psi(model, theta, gamma, X0, Z, y, c)


def inner_max_batch(model, params, X, y, cfg, c):
    """Epsilon-accurate inner maximizers for a batch of samples.

    Runs gradient ascent from each anchor row until the per-row gradient
    certificate ||g||^2 <= 2*lam*eps holds or the iteration budget is
    spent. Returns (Z, psi values, per-row iteration counts); a count
    equal to oracle_max_iters flags an uncertified row.
    """
    if params.gamma < cfg.gamma0 - 1e-12:
        raise ConfigurationError(
            "gamma=%g below gamma0=%g" % (params.gamma, cfg.gamma0))
    lam = concavity_margin(model, params.gamma, cfg, c)
    threshold = 2.0 * lam * cfg.oracle_eps
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    theta, gamma = params.theta, params.gamma

    Z = X.copy()
    iters = np.zeros(len(X), dtype=int)
    active = np.ones(len(X), dtype=bool)
    limit = 10.0 * c.d0
    for _ in range(cfg.oracle_max_iters):
        g = grad_zeta_psi(model, theta, gamma, X[active], Z[active], y[active], c)
        done = np.einsum("ij,ij->i", g, g) <= threshold
        still = np.flatnonzero(active)[~done]
        active[:] = False
        active[still] = True
        if not still.size:
            break
        Z[still] = Z[still] + cfg.oracle_step * g[~done]
        iters[still] += 1
        drift = np.linalg.norm(Z[still] - X[still], axis=1)
        if np.any(drift > limit):
            bad = int(still[int(np.argmax(drift > limit))])
            raise InstabilityError(
                "inner ascent diverged on sample %d (drift %.3g > %.3g)"
                % (bad, float(drift.max()), limit))
    vals = psi_batch(model, theta, gamma, X, Z, y, cfg.rho, c)
    return Z, vals, iters


def inner_max_oracle(model, params, z, cfg, c):
    """Single-sample inner maximizer: (zeta_eps, psi value, iterations)."""
    Z, vals, iters = inner_max_batch(
        model, params, z.x[None, :], np.array([z.y]), cfg, c)
    return Z[0], float(vals[0]), int(iters[0])


def perturbed_gradient(model, theta, gamma, X0, Z, y, rho, c):
    """Batch-averaged gradient of psi in (theta, gamma) at rows Z.

    The theta block is the plain loss gradient at the perturbed points;
    the gamma block is rho minus the average transport cost actually
    incurred. Summation is in sample-index order for determinism.
    """
    gt = model.grad_theta(theta, Z, y).mean(axis=0)
    costs = np.sum((Z - X0) ** 2, axis=1) if c.p == 2.0 else \
        np.asarray([c(x0, zz) for x0, zz in zip(X0, Z)])
    return np.append(gt, rho - costs.mean())


def danskin_gradient(model, params, z, cfg, c):
    """Gradient of the inner-sup value function at one datum."""
    X = z.x[None, :]
    y = np.array([z.y])
    Z, _, _ = inner_max_batch(model, params, X, y, cfg, c)
    return perturbed_gradient(model, params.theta, params.gamma, X, Z, y, cfg.rho, c)


def robust_objective(model, params, X, y, reg, cfg, c):
    """Full-batch robust surrogate value F at the current parameters."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _, vals, _ = inner_max_batch(model, params, X, y, cfg, c)
    return float(vals.mean() + reg.value(params))


def dual_objective(model, params, gamma, samples, rho, c, exact_inner=None, cfg=None):
    """Average inner supremum at fixed theta, as a function of gamma.

    `gamma` may be a scalar or an iterable; an iterable returns the grid
    minimum with ties toward the smaller gamma. With `exact_inner` the
    supremum is exact enumeration over the given finite candidate set
    (verification mode); otherwise the ascent oracle under `cfg` is used.
    """
    if len(samples) == 0:
        raise ConfigurationError("dual objective needs at least one sample")
    gammas = np.atleast_1d(np.asarray(gamma, dtype=float))
    X = np.stack([z.x for z in samples])
    y = np.array([z.y for z in samples], dtype=float)

    if exact_inner is not None:
        values = _dual_values_enumerated(model, params.theta, gammas, X, y,
                                         rho, c, exact_inner)
    else:
        if cfg is None:
            raise ConfigurationError("oracle mode needs a RobustConfig")
        values = np.empty(len(gammas))
        for i, g in enumerate(gammas):
            p = params.with_gamma(float(g))
            _, vals, _ = inner_max_batch(model, p, X, y, cfg, c)
            values[i] = vals.mean()
    return float(values[int(np.argmin(values))])


def _candidate_tables(model, theta, X, y, rho, c, Z_grid):
    Z = np.atleast_2d(np.asarray(Z_grid, dtype=float))
    C = c.pairwise(X, Z)
    L = np.stack([model.loss(theta, Z, np.full(len(Z), yy)) for yy in y])
    return L, rho - C


def _dual_values_enumerated(model, theta, gammas, X, y, rho, c, Z_grid):
    L, S = _candidate_tables(model, theta, X, y, rho, c, Z_grid)
    values = np.empty(len(gammas))
    for i, g in enumerate(gammas):
        values[i] = np.max(L + g * S, axis=1).mean()
    return values


def minimize_dual_gamma(model, params, samples, rho, c, lo=0.0, hi=1e4,
                        exact_inner=None, cfg=None, grid_resolution=1e-4):
    """Verification-mode inf over gamma of the dual objective.

    Scans a grid on [lo, hi] at resolution grid_resolution*(hi-lo), then
    refines around the grid minimum with golden-section search (the dual
    is convex in gamma). Returns (gamma_star, value), ties toward the
    smaller gamma.
    """
    if hi <= lo:
        raise ConfigurationError("need hi > lo for the gamma search")

    def value_at(g):
        return dual_objective(model, params, float(g), samples, rho, c,
                              exact_inner=exact_inner, cfg=cfg)

    if exact_inner is not None:
        X = np.stack([z.x for z in samples])
        y = np.array([z.y for z in samples], dtype=float)
        L, S = _candidate_tables(model, params.theta, X, y, rho, c, exact_inner)

        def value_at(g):
            return float(np.max(L + g * S, axis=1).mean())

    grid = np.linspace(lo, hi, int(round(1.0 / grid_resolution)) + 1)
    coarse = np.array([value_at(g) for g in grid])
    k = int(np.argmin(coarse))
    best_g, best_v = float(grid[k]), float(coarse[k])

    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, len(grid) - 1)]
    x1 = b - _GOLDEN_RATIO * (b - a)
    x2 = a + _GOLDEN_RATIO * (b - a)
    f1, f2 = value_at(x1), value_at(x2)
    for _ in range(200):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN_RATIO * (b - a)
            f1 = value_at(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN_RATIO * (b - a)
            f2 = value_at(x2)
        if b - a < 1e-14 * max(1.0, abs(b)):
            break
    for g, v in ((x1, f1), (x2, f2)):
        if v < best_v or (v == best_v and g < best_g):
            best_g, best_v = float(g), float(v)
    return best_g, best_v


def stationarity_distance(model, params, reg, X, y, cfg, c):
    """Distance from zero to the composite subdifferential at params.

    The smooth part is the full-batch Danskin gradient of the robust
    surrogate; the regularizer contributes its coordinatewise min-norm
    subgradient residual on the theta block, and the gamma block is
    measured against the normal cone of {gamma >= gamma0}.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Z, _, _ = inner_max_batch(model, params, X, y, cfg, c)
    grad = perturbed_gradient(model, params.theta, params.gamma, X, Z, y, cfg.rho, c)
    resid_theta = reg.residual(params.theta, grad[:-1])
    resid_gamma = gamma_residual(params.gamma, grad[-1], cfg.gamma0)
    return float(np.sqrt(np.sum(resid_theta ** 2) + resid_gamma ** 2))


def duality_gap(model, params, samples, rho, c, Z_grid, gamma_hi=1e4):
    """|min_gamma dual - primal| on one finite-support instance.

    Convenience wrapper used by verification commands and tests: both
    sides are restricted to the same finite candidate set, where strong
    duality must hold to solver precision.
    """
    X = np.stack([z.x for z in samples])
    y = np.array([z.y for z in samples], dtype=float)
    P0 = DiscreteDistribution.uniform(X)
    primal, _ = worst_case_primal(model, params, P0, Z_grid, rho, c, labels=y)
    _, dual = minimize_dual_gamma(model, params, samples, rho, c,
                                  lo=0.0, hi=gamma_hi, exact_inner=Z_grid)
    return abs(dual - primal), dual, primal
