"""Over-identification and instrument-strength diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .data import DesignMatrices, RANK_RTOL
from .errors import DataError, NumericalError
from .estimator import EstimateResult, FirstStage, fit_first_stage
from .variance import cluster_sums


@dataclass(frozen=True)
class JTest:
    stat: float
    dof: int
    pvalue: float | None
    flags: tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class DiagnosticsReport:
    j: JTest
    f_classical: np.ndarray
    f_robust: np.ndarray
    cragg_donald: float
    flags: tuple[str, ...] = field(default=())


def j_test(est: EstimateResult, design: DesignMatrices, clustered: bool = False,
           centered: bool = True) -> JTest:
    """Hansen-type J statistic n * g' V^+ g with g = n^-1 Z'e.

    V is the (by default centered) variance of Z_i e_i, summed within clusters
    when ``clustered``. A rank-deficient V falls back to the pseudo-inverse and
    sets a flag; the degrees of freedom are then capped at rank(V).

    The reference distribution is chi-square(q - p). Under several distinct
    LATEs the moment condition fails in population, so rejection signals
    heterogeneity as much as instrument invalidity.
    """
    n = design.n
    dof = design.q - design.p
    if dof == 0:
        return JTest(0.0, 0, None, ("just-identified",))
    e = est.residuals
    g = design.Z.T @ e / n
    rows = design.Z * e[:, None]
    if centered:
        rows = rows - g
    if clustered:
        if design.cluster_ids is None:
            raise DataError("cluster id required for the clustered J test")
        rows = cluster_sums(rows, design.cluster_ids, design.n_clusters)
    V = rows.T @ rows / n
    V = (V + V.T) / 2
    w, U = linalg.eigh(V)
    lmax = w.max() if w.size else 0.0
    flags: list[str] = []
    if lmax <= 0:
        return JTest(0.0, 0, None, ("moment variance is zero",))
    keep = w > RANK_RTOL * lmax
    rank = int(keep.sum())
    if rank < V.shape[0]:
        flags.append(f"moment variance rank deficient (rank {rank} of {V.shape[0]}); pseudo-inverse used")
    proj = U[:, keep].T @ g
    stat = float(n * np.sum(proj ** 2 / w[keep]))
    stat = max(stat, 0.0)
    dof_eff = min(dof, rank)
    if dof_eff < dof:
        flags.append(f"degrees of freedom reduced to {dof_eff}")
    pvalue = float(stats.chi2.sf(stat, dof_eff)) if dof_eff > 0 else None
    return JTest(stat, dof_eff, pvalue, tuple(flags))


def _ols(y, X):
    coef, *_ = linalg.lstsq(X, y, check_finite=False)
    return coef, y - X @ coef


def first_stage_f(design: DesignMatrices, flavor: str = "classical", fs: FirstStage | None = None) -> np.ndarray:
    """F statistic for the excluded instruments in each first-stage regression.

    ``classical`` compares restricted (covariates only) and unrestricted sums of
    squared residuals; ``robust`` is the Wald statistic over q using the HC0
    covariance of the excluded-instrument coefficients.
    """
    if fs is None:
        fs = fit_first_stage(design)
    n, l, q = design.n, design.l, design.q
    W, Z = design.Z[:, :l], design.Z
    D = design.X[:, l:]
    out = np.empty(design.p)
    for j in range(design.p):
        u = fs.residuals[:, j]
        ssr_u = float(u @ u)
        scale = float(D[:, j] @ D[:, j]) or 1.0
        if ssr_u <= 1e-24 * scale:
            raise NumericalError(f"degenerate first stage for {design.x_names[l + j]}: perfect fit")
        if flavor == "classical":
            _, r = _ols(D[:, j], W)
            ssr_r = float(r @ r)
            out[j] = ((ssr_r - ssr_u) / q) / (ssr_u / (n - l - q))
        elif flavor == "robust":
            zz = linalg.cho_factor(Z.T @ Z, lower=True, check_finite=False)
            meat = (Z * u[:, None] ** 2).T @ Z
            bread_meat = linalg.cho_solve(zz, meat, check_finite=False)
            cov = linalg.cho_solve(zz, bread_meat.T, check_finite=False)
            pi = fs.coef[l:, j]
            V = cov[l:, l:]
            lam = np.linalg.eigvalsh(V)
            if lam[0] <= RANK_RTOL * max(lam[-1], 0.0):
                # happens when some instrument cell has a perfect first-stage fit
                raise NumericalError(f"robust first-stage covariance is singular for {design.x_names[l + j]}")
            out[j] = float(pi @ linalg.solve(V, pi, assume_a="pos")) / q
        else:
            raise ValueError(f"unknown F flavor {flavor!r}")
    return out


def _partial_out(a, W):
    _, r = _ols(a, W)
    return r


def cragg_donald(design: DesignMatrices) -> float:
    """Minimum eigenvalue of the concentration-type matrix for p >= 1 endogenous columns.

    Reduces to the classical first-stage F when p = 1.
    """
    n, l, q = design.n, design.l, design.q
    W = design.Z[:, :l]
    Dt = _partial_out(design.X[:, l:], W)
    Zt = _partial_out(design.Z[:, l:], W)
    Q, _ = np.linalg.qr(Zt)
    PD = Q @ (Q.T @ Dt)
    MD = Dt - PD
    sigma_dd = MD.T @ MD / (n - l - q)
    try:
        c = linalg.cholesky(sigma_dd, lower=True)
    except linalg.LinAlgError:
        raise NumericalError("singular first-stage residual covariance") from None
    # Sigma^-1/2 via the Cholesky factor: same eigenvalues as the symmetric root.
    G = linalg.solve_triangular(c, (Dt.T @ PD), lower=True)
    G = linalg.solve_triangular(c, G.T, lower=True).T
    G = (G + G.T) / 2
    return float(linalg.eigvalsh(G).min() / q)


def diagnose(est: EstimateResult, design: DesignMatrices, clustered: bool = False) -> DiagnosticsReport:
    j = j_test(est, design, clustered=clustered)
    flags = list(j.flags)
    try:
        fc = first_stage_f(design, "classical", est.first_stage)
        fr = first_stage_f(design, "robust", est.first_stage)
        cd = cragg_donald(design)
    except NumericalError as exc:
        flags.append(str(exc))
        fc = fr = np.full(design.p, np.nan)
        cd = float("nan")
    return DiagnosticsReport(j, fc, fr, cd, tuple(flags))
