"""Propensity-score instrument: logit first stage and the two-step variance.

The logit score, the second-stage IV conditions and their stacking form a
just-identified system h_i(beta) with beta = (delta, pi, gamma, rho). Its
variance is Gamma^-1 Delta Gamma'^-1 with an analytic Jacobian Gamma.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import expit

from .data import DesignMatrices
from .errors import DataError, NumericalError, SeparationError
from .estimator import EstimateResult, fit_2sls
from .variance import VarianceResult, standard_errors

logger = logging.getLogger(__name__)

SEPARATION_BOUND = 30.0
P_CLAMP = 1e-12


@dataclass(frozen=True, eq=False)
class LogitFit:
    delta_pi: np.ndarray
    fitted_p: np.ndarray
    converged: bool
    iterations: int
    gradient_norm: float
    loglik: float
    clamped: int = 0


@dataclass(frozen=True, eq=False)
class StackedMomentSystem:
    h: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    V: np.ndarray
    names: tuple[str, ...]


def _treatment(design: DesignMatrices) -> np.ndarray:
    if design.p != 1:
        raise DataError("the propensity-score first stage supports exactly one endogenous variable")
    d = design.X[:, design.l]
    if not np.all((d == 0) | (d == 1)):
        raise DataError("the propensity-score first stage needs a binary (0/1) treatment")
    return d


def loglik(theta, Z, d) -> float:
    t = Z @ theta
    return float(np.sum(d * t - np.logaddexp(0.0, t)))


def fit_logit(design: DesignMatrices, max_iter: int = 100, tol: float = 1e-8) -> LogitFit:
    """Maximum likelihood logit of the treatment on Z by Newton-Raphson with step-halving.

    Starts from zero. Raises SeparationError once any coefficient exceeds 30
    in magnitude, and NumericalError if ``max_iter`` is exhausted.
    """
    d = _treatment(design)
    Z = design.Z
    n = design.n
    theta = np.zeros(Z.shape[1])
    ll = loglik(theta, Z, d)
    gnorm = np.inf
    for it in range(1, max_iter + 1):
        p = expit(Z @ theta)
        grad = Z.T @ (d - p)
        gnorm = float(np.abs(grad).max())
        w = p * (1 - p)
        info = (Z * w[:, None]).T @ Z
        try:
            step = linalg.solve(info, grad, assume_a="pos", check_finite=False)
        except linalg.LinAlgError:
            raise SeparationError("logit information matrix is singular (separation?)") from None
        for _ in range(40):
            cand = theta + step
            ll_cand = loglik(cand, Z, d)
            if ll_cand >= ll:
                break
            step = step / 2
        else:
            cand, ll_cand = theta, ll
        theta, ll = cand, ll_cand
        if np.abs(theta).max() > SEPARATION_BOUND:
            raise SeparationError(
                f"logit coefficients diverge (|coef| > {SEPARATION_BOUND:g}): "
                "some covariate cell perfectly predicts the treatment"
            )
        if gnorm <= tol * n and np.abs(step).max() <= 1e-10 * (1 + np.abs(theta).max()):
            break
    else:
        raise NumericalError(f"logit did not converge in {max_iter} iterations")

    p = expit(Z @ theta)
    gnorm = float(np.abs(Z.T @ (d - p)).max())
    clamped = int(np.sum((p < P_CLAMP) | (p > 1 - P_CLAMP)))
    if clamped:
        logger.warning("%d fitted probabilities clamped to [%g, 1-%g]", clamped, P_CLAMP, P_CLAMP)
        p = np.clip(p, P_CLAMP, 1 - P_CLAMP)
    return LogitFit(theta, p, True, it, gnorm, ll, clamped)


def psiv_design(design: DesignMatrices, fit: LogitFit) -> DesignMatrices:
    W = design.Z[:, :design.l]
    Q = np.column_stack([W, fit.fitted_p])
    return DesignMatrices(
        design.Y, design.X, Q, design.x_names, design.z_names[:design.l] + ("pscore",),
        design.l, design.cluster_ids,
    )


def psiv_estimate(design: DesignMatrices, fit: LogitFit) -> EstimateResult:
    """IV estimate using [W, p_hat] as instruments for [W, D]."""
    # Just identified: the 2SLS solve reduces to the exact IV solve of the FOC.
    return fit_2sls(psiv_design(design, fit))


def stacked_moments(design: DesignMatrices, fit: LogitFit, est: EstimateResult) -> StackedMomentSystem:
    """Stacked moment rows h_i and the analytic Jacobian at the two-step solution."""
    d = _treatment(design)
    n, l = design.n, design.l
    Z, W = design.Z, design.Z[:, :l]
    X = design.X
    p = fit.fitted_p
    e = design.Y - X @ est.beta
    u = d - p  # equals -(1 - D) + exp(-t)/(1 + exp(-t))

    h = np.hstack([Z * u[:, None], W * e[:, None], (p * e)[:, None]])

    kz, kx = Z.shape[1], X.shape[1]
    dp = p * (1 - p)
    G = np.zeros((kz + kx, kz + kx))
    G[:kz, :kz] = -(Z * dp[:, None]).T @ Z / n
    G[kz:kz + l, kz:] = -W.T @ X / n
    G[kz + l, :kz] = (dp * e) @ Z / n
    G[kz + l, kz:] = -p @ X / n

    delta = h.T @ h / n
    delta = (delta + delta.T) / 2
    try:
        lu = linalg.lu_factor(G, check_finite=False)
    except (linalg.LinAlgError, ValueError):
        raise NumericalError("stacked-moment Jacobian is singular") from None
    if np.abs(np.diag(lu[0])).min() <= 1e-14 * np.abs(G).max():
        raise NumericalError("stacked-moment Jacobian is singular")
    GiD = linalg.lu_solve(lu, delta)
    V = linalg.lu_solve(lu, GiD.T)
    V = (V + V.T) / 2
    names = tuple(f"fs:{z}" for z in design.z_names) + design.x_names
    return StackedMomentSystem(h, G, delta, V, names)


def psiv_variance(design: DesignMatrices, fit: LogitFit, est: EstimateResult) -> VarianceResult:
    """Two-step variance of the second-stage coefficients (gamma, rho)."""
    sm = stacked_moments(design, fit, est)
    kz = design.Z.shape[1]
    sigma = sm.V[kz:, kz:]
    return VarianceResult("PSIV", sigma, standard_errors(sigma, design.n), design.n)
