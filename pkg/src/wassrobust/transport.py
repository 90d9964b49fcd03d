"""Transportation costs, finite-support distributions, and exact OT solves.

The linear programs here are verification oracles: they certify the dual
surrogate used for training, at desk scale (tens of atoms). They are kept
exact by handing the standard-form LP to scipy's HiGHS solver rather than
by any iterative approximation of our own.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .errors import ConfigurationError, DataError

MAX_ATOMS = 64
MAX_PRIMAL_CELLS = 4096


@dataclass(frozen=True)
class TransportCost:
    """Squared-norm ground cost c(z, zeta) = ||z - zeta||_p^2.

    mu is the strong-convexity modulus of c(z, .) (2 for p=2); L_c a
    Lipschitz bound valid on the declared domain of radius d0. Both are
    metadata the caller asserts, not quantities measured here.
    """

    kind: str = "squared-l2"
    p: float = 2.0
    mu: float = 2.0
    L_c: Optional[float] = None
    d0: float = 10.0

    def __post_init__(self):
        if self.kind not in ("squared-l2", "squared-lp"):
            raise ConfigurationError("unknown cost kind %r" % (self.kind,))
        if self.kind == "squared-l2" and self.p != 2.0:
            raise ConfigurationError("squared-l2 cost must have p=2")
        if self.p < 1.0:
            raise ConfigurationError("p must be >= 1")
        if self.mu <= 0 or self.d0 <= 0:
            raise ConfigurationError("mu and d0 must be positive")

    def __call__(self, z, zeta):
        z = np.asarray(z, dtype=float)
        zeta = np.asarray(zeta, dtype=float)
        if z.shape != zeta.shape:
            raise ConfigurationError("cost arguments must share a shape")
        diff = zeta - z
        if self.p == 2.0:
            return float(diff @ diff) if diff.ndim == 1 else np.sum(diff * diff, axis=-1)
        norm = np.sum(np.abs(diff) ** self.p, axis=-1) ** (1.0 / self.p)
        return norm ** 2 if diff.ndim > 1 else float(norm ** 2)

    def pairwise(self, Z, W):
        """Cost matrix between rows of Z (n, d) and rows of W (m, d)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        W = np.atleast_2d(np.asarray(W, dtype=float))
        diff = Z[:, None, :] - W[None, :, :]
        if self.p == 2.0:
            return np.sum(diff * diff, axis=-1)
        return np.sum(np.abs(diff) ** self.p, axis=-1) ** (2.0 / self.p)

    def grad_zeta(self, z, zeta):
        """Gradient of c(z, .) at zeta; rows when inputs are batches."""
        z = np.asarray(z, dtype=float)
        zeta = np.asarray(zeta, dtype=float)
        diff = zeta - z
        if self.p == 2.0:
            return 2.0 * diff
        norm = np.sum(np.abs(diff) ** self.p, axis=-1, keepdims=diff.ndim > 1)
        norm = norm ** (1.0 / self.p)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = 2.0 * norm ** (2.0 - self.p) * np.sign(diff) * np.abs(diff) ** (self.p - 1.0)
        return np.where(norm == 0.0, 0.0, g)


def _as_points(atoms):
    pts = np.asarray(atoms, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise DataError("atoms must form a nonempty (n, d) array")
    return pts


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finitely supported measure: atom rows and matching weights."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "atoms", _as_points(self.atoms))
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.shape != (self.atoms.shape[0],):
            raise DataError("need one weight per atom")
        if np.any(w < 0.0):
            raise DataError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise DataError("weights must sum to 1 within 1e-12")

    def __len__(self):
        return self.atoms.shape[0]

    @property
    def dim(self):
        return self.atoms.shape[1]

    @staticmethod
    def uniform(atoms):
        pts = _as_points(atoms)
        n = pts.shape[0]
        return DiscreteDistribution(pts, np.full(n, 1.0 / n))


@dataclass(frozen=True)
class Coupling:
    """Transport plan between two discrete distributions."""

    matrix: np.ndarray
    source: DiscreteDistribution
    target: DiscreteDistribution

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.shape != (len(self.source), len(self.target)):
            raise DataError("coupling shape must be |P| x |Q|")
        if np.any(m < -1e-9):
            raise DataError("coupling has negative mass")
        if np.max(np.abs(m.sum(axis=1) - self.source.weights)) > 1e-9:
            raise DataError("row sums disagree with source weights")
        if np.max(np.abs(m.sum(axis=0) - self.target.weights)) > 1e-9:
            raise DataError("column sums disagree with target weights")


def _solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None):
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError("transport LP failed: %s" % res.message)
    return res


def transport_plan(P, Q, c):
    """Exact optimal transport between small discrete measures.

    Returns (optimal expected cost, Coupling).
    """
    if len(P) > MAX_ATOMS or len(Q) > MAX_ATOMS:
        raise ConfigurationError("supports above %d atoms are out of oracle scale" % MAX_ATOMS)
    if P.dim != Q.dim:
        raise DataError("distributions live in different dimensions")
    n, m = len(P), len(Q)
    C = c.pairwise(P.atoms, Q.atoms)

    # marginal constraints; one row is redundant but HiGHS copes
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A_eq[n + j, j::m] = 1.0
    b_eq = np.concatenate([P.weights, Q.weights])

    res = _solve_lp(C.ravel(), A_eq=A_eq, b_eq=b_eq)
    plan = np.maximum(res.x.reshape(n, m), 0.0)
    return float(res.fun), Coupling(plan, P, Q)


def wasserstein(P, Q, c):
    """Optimal value of the discrete transport problem."""
    value, _ = transport_plan(P, Q, c)
    return value


def worst_case_primal(model, params, P0, Z_grid, rho, c, labels=None):
    """Exact worst-case expected loss over the restricted ambiguity set.

    Maximizes sum_ij pi_ij * loss(theta; zeta_j, y_i) over couplings that
    keep row marginals at P0's weights and expected transport cost at most
    rho, with candidate destinations limited to the rows of Z_grid.
    Returns the optimal value and the induced marginal on Z_grid.
    """
    if rho < 0:
        raise ConfigurationError("rho must be nonnegative")
    Z = _as_points(Z_grid)
    n, m = len(P0), Z.shape[0]
    if n * m > MAX_PRIMAL_CELLS:
        raise ConfigurationError(
            "instance has %d cells, above the %d oracle limit" % (n * m, MAX_PRIMAL_CELLS))
    if labels is None:
        y = np.zeros(n)
    else:
        y = np.broadcast_to(np.asarray(labels, dtype=float), (n,))

    C = c.pairwise(P0.atoms, Z)
    L = np.stack([model.loss(params.theta, Z, np.full(m, y[i])) for i in range(n)])

    A_eq = np.zeros((n, n * m))
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1.0
    res = _solve_lp(-L.ravel(), A_ub=C.ravel()[None, :], b_ub=[float(rho)],
                    A_eq=A_eq, b_eq=P0.weights)

    plan = np.maximum(res.x.reshape(n, m), 0.0)
    marginal = plan.sum(axis=0)
    marginal = marginal / marginal.sum()
    return -float(res.fun), DiscreteDistribution(Z, marginal)
