"""Conventional, multiple-LATEs-robust and cluster-robust asymptotic variances of 2SLS/GMM.

Every ``sigma`` here is the asymptotic variance of sqrt(n)(beta_hat - beta_0);
standard errors divide by n only at the edge (:func:`standard_errors`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .data import DesignMatrices
from .errors import DataError, NumericalError
from .estimator import EstimateResult


@dataclass(frozen=True, eq=False)
class InfluenceSet:
    """Row i of ``psi`` is the estimated influence of observation i.

    ``m`` is n^-1 Z'e and ``v`` is S^-1 m, with S the weight analogue of n^-1 Z'Z.
    """

    psi: np.ndarray
    m: np.ndarray
    v: np.ndarray


@dataclass(frozen=True, eq=False)
class VarianceResult:
    flavor: str
    sigma: np.ndarray
    se: np.ndarray
    n: int
    n_clusters: int | None = None
    correction: float | None = None


def _projection(est: EstimateResult):
    mo = est.moments
    c = linalg.cho_factor(mo.Szz, lower=True, check_finite=False)
    A = linalg.cho_solve(c, mo.Sxz.T, check_finite=False).T  # (X'Z/n)(S)^-1
    return c, A


def influence(est: EstimateResult, design: DesignMatrices, residuals=None) -> InfluenceSet:
    """Three-term influence rows for the misspecification-robust variance.

    Row i is ``A(Z_i e_i - m) + (X_i Z_i' - X'Z/n) v + A(S - L_i L_i') v`` with
    ``A = (X'Z/n) S^-1``. For 2SLS, S = Z'Z/n and L = Z. With a fixed custom
    weight the last term is zero because the weight is not estimated.

    ``residuals`` overrides ``est.residuals`` (used for the sqrt(c) rescaling).
    """
    X, Z = design.X, design.Z
    e = est.residuals if residuals is None else np.asarray(residuals, dtype=float)
    if X.shape[0] != e.shape[0] or X.shape[1] != est.beta.shape[0]:
        raise DataError("estimate and design have mismatched dimensions")
    n = X.shape[0]
    mo = est.moments
    c, A = _projection(est)
    m = Z.T @ e / n
    v = linalg.cho_solve(c, m, check_finite=False)

    psi = (Z * e[:, None] - m) @ A.T
    psi += X * (Z @ v)[:, None] - mo.Sxz @ v
    L = mo.weight_rows
    if L is not None:
        psi += mo.Sxz @ v - (L @ A.T) * (L @ v)[:, None]
    return InfluenceSet(psi, m, v)


def _sandwich(est: EstimateResult, rows: np.ndarray, n: int) -> np.ndarray:
    # H^-1 (n^-1 sum r_i r_i') H^-1 as a Gram matrix of Phi = rows H^-1, so diag >= 0 exactly.
    try:
        ch = linalg.cho_factor(est.moments.H, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise NumericalError("H is numerically singular") from None
    phi = linalg.cho_solve(ch, rows.T, check_finite=False).T
    sigma = phi.T @ phi / n
    return (sigma + sigma.T) / 2


def standard_errors(sigma, n: int) -> np.ndarray:
    """sqrt(diag(sigma) / n). A negative diagonal entry is an error, never clipped."""
    d = np.diag(np.asarray(sigma, dtype=float))
    if np.any(d < 0):
        bad = np.flatnonzero(d < 0).tolist()
        raise NumericalError(f"negative variance on diagonal entries {bad}")
    return np.sqrt(d / n)


def sigma_mr(est: EstimateResult, design: DesignMatrices) -> VarianceResult:
    """Multiple-LATEs-robust variance H^-1 (n^-1 sum psi_i psi_i') H^-1."""
    n = design.n
    psi = influence(est, design).psi
    sigma = _sandwich(est, psi, n)
    return VarianceResult("MR", sigma, standard_errors(sigma, n), n)


def sigma_c(est: EstimateResult, design: DesignMatrices) -> VarianceResult:
    """Conventional heteroskedasticity-robust variance, valid only when E[Z_i e_i] = 0."""
    n = design.n
    _, A = _projection(est)
    rows = (design.Z * est.residuals[:, None]) @ A.T
    sigma = _sandwich(est, rows, n)
    return VarianceResult("C", sigma, standard_errors(sigma, n), n)


def correction_factor(n_clusters: int, n: int, k: int) -> float:
    return n_clusters / (n_clusters - 1) * (n - 1) / (n - k)


def cluster_sums(rows: np.ndarray, cluster_ids: np.ndarray, n_clusters: int) -> np.ndarray:
    out = np.zeros((n_clusters, rows.shape[1]))
    np.add.at(out, cluster_ids, rows)
    return out


def sigma_cmr(est: EstimateResult, design: DesignMatrices, correction: bool = True,
              cluster_ids=None) -> VarianceResult:
    """Cluster-and-multiple-LATEs-robust variance.

    Influence rows are summed within clusters before the outer product. With
    ``correction`` the residuals (and only the second-stage residuals) are
    scaled by sqrt(c), ``c = G/(G-1) * (n-1)/(n-k)``, before forming psi.
    """
    ids = design.cluster_ids if cluster_ids is None else np.asarray(cluster_ids)
    if ids is None:
        raise DataError("cluster id required for the cluster-robust variance")
    _, ids = np.unique(ids, return_inverse=True)
    G = int(ids.max()) + 1
    n, k = design.n, design.k
    if G < 2:
        raise DataError("cluster-robust variance needs at least two clusters")
    if n <= k:
        raise DataError("too few observations for the cluster correction")
    c = correction_factor(G, n, k) if correction else None
    e = est.residuals * np.sqrt(c) if correction else est.residuals
    psi = influence(est, design, residuals=e).psi
    sigma = _sandwich(est, cluster_sums(psi, ids, G), n)
    return VarianceResult("CMR", sigma, standard_errors(sigma, n), n, G, c)


def compute(est: EstimateResult, design: DesignMatrices, flavor: str, correction: bool = True) -> VarianceResult:
    """Dispatch on flavor name: ``C``, ``MR`` or ``CMR``."""
    flavor = flavor.upper()
    if flavor == "C":
        return sigma_c(est, design)
    if flavor == "MR":
        return sigma_mr(est, design)
    if flavor == "CMR":
        return sigma_cmr(est, design, correction=correction)
    raise DataError(f"unknown variance flavor {flavor!r}")
