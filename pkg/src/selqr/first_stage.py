"""Series 2SLS estimation of the inverse selection probability.

Step one regresses the constant 1 on the D-masked outcome basis with the
instrument basis as instruments, giving the unconstrained coefficient
vector beta_u of g_u(y, x). Step two projects the fitted function onto the
cone of functions bounded below by one within the spline span. Step three
turns the fit into per-observation weights D_i * g(Y_i, X_i).

Two weighting modes are provided. "pointwise" (the default) floors the
fitted values of g_u at one, i.e. projects the value vector onto the
feasible orthant; it leaves the fit untouched wherever the bound already
holds. "functional" evaluates the cone-projected coefficient fit, which
bends the whole spline to honor the bound and is the more aggressive
correction. Both satisfy every weight invariant; the pointwise mode is the
default because the functional projection measurably tilts the downstream
quantile fit on well-specified designs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from . import activeset
from .basis import (BasisPlan, DesignMatrices, build_designs, default_plan,
                    eval_basis, eval_block)
from .data import ObservationSet
from .errors import InputError, NumericalError

KKT_STATIONARITY_TOL = 1e-6
FEASIBILITY_TOL = 1e-8


@dataclass(frozen=True)
class FirstStageFit:
    """Fitted first stage; immutable and shareable across threads."""

    plan: BasisPlan
    designs: DesignMatrices
    beta_u: np.ndarray
    H_hat: np.ndarray           # J x K, E_n[D phi b']
    G_hat: np.ndarray           # K x K, E_n[b b']
    c_hat: np.ndarray           # K,   E_n[b]
    projector: np.ndarray       # J x K, H G^-1
    HGinvH: np.ndarray          # J x J, H G^-1 H'
    n: int
    beta_c: np.ndarray | None = None
    constraint_points: np.ndarray | None = None   # rows of phi at enforced points
    kkt: dict | None = None

    def g_values(self, y, x=None, w=None, mode: str = "pointwise") -> np.ndarray:
        """Evaluate the fitted inverse selection probability at query points.

        The spline coordinate is clamped to its knot range, so any (y, x) is
        evaluable. Modes: "unconstrained" (raw g_u), "pointwise"
        (max(g_u, 1)), "functional" (cone-projected fit, requires
        cone_project to have run).
        """
        y = np.atleast_1d(np.asarray(y, dtype=float))
        m = len(y)
        x = np.zeros((m, 0)) if x is None else np.asarray(x, dtype=float).reshape(m, -1)
        w = np.zeros((m, 1)) if w is None else np.asarray(w, dtype=float).reshape(m, -1)
        query = ObservationSet(d=np.ones(m, dtype=int), y=y, w=w, x=x)
        phi = eval_block(self.plan.phi, query)
        if mode == "unconstrained":
            return phi @ self.beta_u
        if mode == "pointwise":
            return np.maximum(phi @ self.beta_u, 1.0)
        if mode == "functional":
            if self.beta_c is None:
                raise NumericalError("functional mode requires cone_project first")
            return np.maximum(phi @ self.beta_c, 1.0)
        raise InputError(f"unknown weight mode {mode!r}")


@dataclass(frozen=True)
class WeightVector:
    """Selection weights omega_i = D_i * g(Y_i, X_i)."""

    omega: np.ndarray
    selected: np.ndarray
    mode: str

    def __post_init__(self):
        self.omega.setflags(write=False)
        if (self.omega[~self.selected] != 0).any():
            raise NumericalError("weights must vanish exactly on unselected rows")
        if (self.omega[self.selected] < 1.0 - FEASIBILITY_TOL).any():
            raise NumericalError("selected-row weights must be >= 1")


def _solve_spd(M: np.ndarray, rhs: np.ndarray, jitter: bool = False):
    """Cholesky solve, optionally retrying once with a ridge jitter."""
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(M), rhs)
    except np.linalg.LinAlgError:
        if not jitter:
            raise
        ridge = 1e-10 * np.trace(M) / M.shape[0]
        return scipy.linalg.cho_solve(
            scipy.linalg.cho_factor(M + ridge * np.eye(M.shape[0])), rhs)


def estimate_unconstrained(data: ObservationSet,
                           plan: BasisPlan | None = None) -> FirstStageFit:
    """2SLS coefficient of the moment E[b (1 - D phi' beta)] = 0.

    beta_u = (H G^-1 H')^-1 H G^-1 c with H = E_n[D phi b'], G = E_n[b b'],
    c = E_n[b]. G gets a ridge jitter of 1e-10 tr(G)/K if its factorization
    fails; a singular H G^-1 H' after that raises.
    """
    if plan is None:
        plan = default_plan(data)
    if data.n <= plan.k:
        raise InputError(f"need n > K = {plan.k} rows, got {data.n}")
    designs = build_designs(data, plan)
    n = data.n
    H = designs.phi.T @ designs.b / n
    G = designs.b.T @ designs.b / n
    c = designs.b.mean(axis=0)
    try:
        GinvHt = _solve_spd(G, H.T, jitter=True)
    except np.linalg.LinAlgError:
        raise NumericalError("first-stage rank condition failed (G singular)")
    projector = GinvHt.T              # H G^-1
    M = projector @ H.T               # H G^-1 H'
    try:
        beta_u = scipy.linalg.cho_solve(scipy.linalg.cho_factor(M), projector @ c)
    except np.linalg.LinAlgError:
        raise NumericalError("first-stage rank condition failed")
    return FirstStageFit(plan=plan, designs=designs, beta_u=beta_u, H_hat=H,
                         G_hat=G, c_hat=c, projector=projector, HGinvH=M, n=n)


def moment_residual(fit: FirstStageFit) -> np.ndarray:
    """E_n[b (1 - D phi' beta_u)]; exactly zero when K = J."""
    return fit.c_hat - fit.H_hat.T @ fit.beta_u


def _grid_x_rows(data: ObservationSet, var_names, max_rows: int = 500) -> np.ndarray:
    """Values of the linear variables at which the bound is enforced off-sample.

    Linear variables make each constraint affine in them, so enforcing at
    the per-coordinate extremes (bounding-box corners) implies the bound on
    every interior row. Falls back to evenly subsampled observed rows when
    the corner count would explode.
    """
    if not var_names:
        return np.zeros((1, 0))
    cols = np.column_stack([_named_column(data, v) for v in var_names])
    if len(var_names) <= 8:
        ranges = [(c.min(), c.max()) for c in cols.T]
        return np.array(list(itertools.product(*ranges)))
    idx = np.unique(np.linspace(0, data.n - 1, max_rows).round().astype(int))
    return cols[idx]


def _named_column(data: ObservationSet, name: str) -> np.ndarray:
    kind, i = name[0], int(name[1:])
    return data.w[:, i] if kind == "w" else data.x[:, i]


def constraint_matrix(fit: FirstStageFit, data: ObservationSet,
                      n_grid: int = 50) -> np.ndarray:
    """Rows of phi at every point where g >= 1 is enforced.

    The set is the selected sample points plus a uniform grid over the
    spline variable's boundary range crossed with the linear-variable
    corners; duplicates are collapsed.
    """
    phi_sel = fit.designs.phi[data.selected]
    spec = fit.plan.phi
    xrows = _grid_x_rows(data, spec.linear_vars)
    if spec.knots is not None:
        ygrid = np.linspace(spec.knots.lo, spec.knots.hi, n_grid)
        lead = eval_basis(spec.knots, ygrid)
    else:
        lead = np.ones((1, 1))
    gy = np.repeat(lead, len(xrows), axis=0)
    gx = np.tile(xrows, (len(lead), 1))
    grid_rows = np.column_stack([gy, gx]) if gx.shape[1] else gy
    return np.unique(np.vstack([phi_sel, grid_rows]), axis=0)


def cone_project(fit: FirstStageFit, data: ObservationSet) -> FirstStageFit:
    """Least-squares projection of g_u onto {h in span(phi): h >= 1}.

    Minimizes the selected-sample mean of (g_u - h)^2 subject to the bound
    on the constraint set, by primal active-set QP started from the
    strictly feasible constant-2 function. The result is KKT-audited. The
    projection problem depends only on beta_u and the data, so re-running
    on an already projected fit reproduces beta_c bit for bit.
    """
    A = constraint_matrix(fit, data)
    b = np.ones(len(A))
    phi_sel = fit.designs.phi[data.selected]
    Q = phi_sel.T @ phi_sel / len(phi_sel)
    q = Q @ fit.beta_u

    if (A @ fit.beta_u).min() >= 1.0 - 1e-9:
        kkt = activeset.kkt_residuals(Q, q, A, b, fit.beta_u)
        return replace(fit, beta_c=fit.beta_u.copy(), constraint_points=A,
                       kkt={**kkt, "multipliers": None, "active_set_size": 0})

    x0 = np.zeros(fit.plan.j)
    lead = 1 if fit.plan.phi.knots is None else fit.plan.phi.knots.n_basis
    x0[:lead] = 2.0   # constant function 2 via partition of unity
    if (A @ x0).min() < 1.0 + 1e-9:
        raise NumericalError("cone projection lacks a strictly feasible constant; "
                             "the basis does not span constants")

    sol = activeset.solve_qp(Q, q, A, b, x0)
    kkt = activeset.kkt_residuals(Q, q, A, b, sol.x)
    scale = max(1.0, np.abs(Q @ sol.x - q).max())
    if kkt["stationarity"] > KKT_STATIONARITY_TOL * scale:
        raise NumericalError(f"cone projection failed its KKT audit: {kkt}")
    if kkt["feasibility"] > FEASIBILITY_TOL:
        raise NumericalError("cone projection returned an infeasible point")
    return replace(fit, beta_c=sol.x, constraint_points=A,
                   kkt={**kkt, "iterations": sol.iterations,
                        "active_set_size": len(sol.working_set),
                        "multipliers": None})


def weights(fit: FirstStageFit, data: ObservationSet,
            mode: str = "pointwise") -> WeightVector:
    """Observation weights omega_i = D_i * g(Y_i, X_i), floored at one.

    mode "pointwise" floors the unconstrained fitted values; "functional"
    evaluates the cone-projected fit (see the module docstring).
    """
    phi_sel = fit.designs.phi[data.selected]
    if mode == "pointwise":
        g_sel = phi_sel @ fit.beta_u
    elif mode == "functional":
        if fit.beta_c is None:
            raise NumericalError("functional weights require cone_project first")
        g_sel = phi_sel @ fit.beta_c
    else:
        raise InputError(f"unknown weight mode {mode!r}")
    omega = np.zeros(data.n)
    omega[data.selected] = np.maximum(g_sel, 1.0)
    return WeightVector(omega=omega, selected=data.selected, mode=mode)
