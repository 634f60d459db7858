"""Exact weighted quantile regression.

minimize_theta  sum_i w_i * rho_tau(y_i - Z_i' theta)

solved as the classical linear program with free coefficients and split
nonnegative residuals, using the HiGHS dual simplex. Simplex returns a
vertex of the feasible polyhedron, so generically d_z residuals are exactly
zero at the solution; ties in flat minima are broken by the solver's
deterministic pivoting order and are stable across runs for identical
inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import InputError, NumericalError


def check_loss(u, tau: float):
    """rho_tau(u) = u * (tau - 1{u < 0})."""
    u = np.asarray(u, dtype=float)
    out = u * (tau - (u < 0))
    return float(out) if out.ndim == 0 else out


def quantile_score(u, tau: float):
    """psi_tau(u) = tau - 1{u < 0}; the convention at u = 0 is psi = tau."""
    u = np.asarray(u, dtype=float)
    out = tau - (u < 0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class QuantileProblem:
    """Design Z (first column constant), outcome y, weights w >= 0, level tau.

    Rows with w_i = 0 are dropped before solving; their y values may be NaN.
    """

    Z: np.ndarray
    y: np.ndarray
    w: np.ndarray
    tau: float

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        y = np.asarray(self.y, dtype=float)
        w = np.asarray(self.w, dtype=float)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)
        if not 0.0 < self.tau < 1.0:
            raise InputError("tau must lie strictly inside (0, 1)")
        if Z.shape[0] != len(y) or len(w) != len(y):
            raise InputError("Z, y, w must share the row count")
        if (w < 0).any():
            raise InputError("weights must be nonnegative")
        keep = w > 0
        if keep.sum() < Z.shape[1]:
            raise InputError("fewer effectively weighted rows than coefficients")
        if not np.isfinite(y[keep]).all():
            raise InputError("non-finite outcome on a positively weighted row")


@dataclass(frozen=True)
class QuantileSolution:
    theta: np.ndarray
    objective: float
    active_set: tuple[int, ...]   # row indices interpolated at the vertex
    tau: float


def solve(problem: QuantileProblem) -> QuantileSolution:
    """Exact minimizer of the weighted check loss.

    The returned point satisfies the subgradient certificate: for every
    coordinate, the weighted score sum over nonzero residuals lies inside
    the interval generated by assigning each zero residual any score in
    [tau-1, tau].
    """
    keep = problem.w > 0
    Z, y, w = problem.Z[keep], problem.y[keep], problem.w[keep]
    n, d = Z.shape
    if np.linalg.matrix_rank(Z) < d:
        raise NumericalError("rank-deficient quantile design")
    tau = problem.tau

    cost = np.concatenate([np.zeros(d), tau * w, (1 - tau) * w])
    A_eq = sp.hstack([sp.csc_matrix(Z), sp.eye(n, format="csc"),
                      -sp.eye(n, format="csc")], format="csc")
    bounds = [(None, None)] * d + [(0, None)] * (2 * n)
    res = linprog(cost, A_eq=A_eq, b_eq=y, bounds=bounds, method="highs-ds")
    if res.status != 0:
        raise NumericalError(f"quantile LP failed: {res.message}")

    theta = res.x[:d]
    resid = y - Z @ theta
    objective = float(np.sum(w * check_loss(resid, tau)))
    zero_tol = 1e-9 * max(1.0, np.abs(y).max())
    zero = np.abs(resid) <= zero_tol
    lo, hi = subgradient_interval(Z, resid, w, tau, zero_tol=zero_tol)
    slack = 1e-6 * max(1.0, float(np.abs(w @ np.abs(Z)).max()))
    if (lo > slack).any() or (hi < -slack).any():
        raise NumericalError("quantile solution violates the subgradient certificate")
    orig = np.flatnonzero(keep)
    return QuantileSolution(theta=theta, objective=objective,
                            active_set=tuple(int(i) for i in orig[zero]), tau=tau)


def subgradient_interval(Z, resid, w, tau, zero_tol=1e-9):
    """Componentwise range of the subgradient over score choices at zeros.

    Returns (lo, hi) arrays; optimality of theta is equivalent to
    lo_k <= 0 <= hi_k for every coordinate k.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    resid = np.asarray(resid, dtype=float)
    w = np.asarray(w, dtype=float)
    zero = np.abs(resid) <= zero_tol
    base = ((w * quantile_score(resid, tau)) * (~zero)) @ Z
    contrib_lo = (w[zero, None] * Z[zero]) * (tau - 1)
    contrib_hi = (w[zero, None] * Z[zero]) * tau
    lo = base + np.minimum(contrib_lo, contrib_hi).sum(axis=0)
    hi = base + np.maximum(contrib_lo, contrib_hi).sum(axis=0)
    return lo, hi
