"""Comparator estimators: complete-case QR and MAR probit-IPW QR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .data import ObservationSet
from .errors import InputError, NumericalError
from .qr import QuantileProblem, QuantileSolution, solve

PROBIT_GRAD_TOL = 1e-8
SEPARATION_BOUND = 30.0


@dataclass(frozen=True)
class ProbitFit:
    """MLE of P(D=1 | X) = Phi(X' gamma)."""

    gamma: np.ndarray
    converged: bool
    iterations: int
    loglik: float

    def probabilities(self, X: np.ndarray) -> np.ndarray:
        return norm.cdf(np.atleast_2d(X) @ self.gamma)


def _probit_parts(gamma, d, X):
    """Mean log-likelihood, gradient and Hessian (all per observation)."""
    s = X @ gamma
    # phi/Phi and phi/(1-Phi) via log-space for tail stability
    r1 = np.exp(norm.logpdf(s) - norm.logcdf(s))
    r0 = np.exp(norm.logpdf(s) - norm.logsf(s))
    sel = d == 1
    ll = np.where(sel, norm.logcdf(s), norm.logsf(s)).mean()
    score = np.where(sel, r1, -r0)
    curv = np.where(sel, -s * r1 - r1**2, s * r0 - r0**2)
    grad = X.T @ score / len(d)
    hess = (X * curv[:, None]).T @ X / len(d)
    return ll, grad, hess, s


def probit_fit(d: np.ndarray, X: np.ndarray, max_iter: int = 200) -> ProbitFit:
    """Newton-Raphson with step halving; converges on the gradient norm.

    X must already carry its intercept column. Raises on detected
    separation (diverging linear predictor) and on non-convergence.
    """
    d = np.asarray(d, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if set(np.unique(d)) - {0.0, 1.0}:
        raise InputError("probit response must be binary")
    if len(np.unique(d)) < 2:
        raise InputError("probit response is constant")
    gamma = np.zeros(X.shape[1])
    ll, grad, hess, s = _probit_parts(gamma, d, X)
    for it in range(1, max_iter + 1):
        if np.abs(grad).max() < PROBIT_GRAD_TOL:
            return ProbitFit(gamma=gamma, converged=True, iterations=it - 1,
                             loglik=ll)
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            raise NumericalError("probit Hessian singular")
        scale = 1.0
        for _ in range(50):
            cand = gamma + scale * step
            ll_new, grad_new, hess_new, s_new = _probit_parts(cand, d, X)
            if ll_new > ll - 1e-14:
                break
            scale *= 0.5
        else:
            raise NumericalError(f"probit step halving stalled at iterate {gamma}")
        gamma, ll, grad, hess, s = cand, ll_new, grad_new, hess_new, s_new
        if np.abs(s).max() > SEPARATION_BOUND:
            raise NumericalError("probit separation detected (monotone likelihood)")
    raise NumericalError(
        f"probit did not converge in {max_iter} iterations; last iterate {gamma}, "
        f"gradient norm {np.abs(grad).max():.3e}")


def uncorrected_qr(data: ObservationSet, tau: float) -> QuantileSolution:
    """Complete-case quantile regression: weights are the selection dummies."""
    return solve(QuantileProblem(Z=data.design_z(), y=data.y_filled(np.nan),
                                 w=data.d.astype(float), tau=tau))


def mar_weights(data: ObservationSet, trim_floor: float = 0.01):
    """Inverse probit probabilities under selection-on-observables."""
    Xd = np.column_stack([np.ones(data.n), data.x])
    pf = probit_fit(data.d, Xd)
    p = np.maximum(pf.probabilities(Xd), trim_floor)
    return data.d / p, pf


def mar_ipw_qr(data: ObservationSet, tau: float,
               trim_floor: float = 0.01) -> QuantileSolution:
    """Two-step MAR correction: probit on the covariates, then IPW QR.

    Fitted selection probabilities are clamped below at trim_floor before
    inverting.
    """
    omega, _ = mar_weights(data, trim_floor)
    return solve(QuantileProblem(Z=data.design_z(), y=data.y_filled(np.nan),
                                 w=omega, tau=tau))
