"""2SLS, weighted linear GMM and the OLS first stage."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .data import DesignMatrices, check_rank
from .errors import DataError, NumericalError, RankDeficiencyError

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Weight for the linear GMM criterion.

    ``kind="two_sls"`` uses ``Z'Z/n``. ``kind="custom"`` takes either a fixed
    symmetric positive-definite ``matrix`` M (the analogue of E[L_i L_i']) or
    per-observation ``rows`` L from which ``M = L'L/n`` is formed. Only the
    second form carries the estimation noise of the weight into the variance.
    """

    kind: str = "two_sls"
    matrix: np.ndarray | None = None
    rows: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("two_sls", "custom"):
            raise DataError(f"unknown weight kind {self.kind!r}")
        if self.kind == "custom":
            if (self.matrix is None) == (self.rows is None):
                raise DataError("custom weight needs exactly one of `matrix` or `rows`")
            if self.matrix is not None:
                M = np.asarray(self.matrix, dtype=float)
                if M.ndim != 2 or M.shape[0] != M.shape[1]:
                    raise DataError("weight matrix must be square")
                if not np.allclose(M, M.T, rtol=0, atol=SYMMETRY_TOL * max(1.0, np.abs(M).max())):
                    raise DataError("weight matrix is not symmetric")
                try:
                    linalg.cholesky(M)
                except linalg.LinAlgError:
                    raise DataError("weight matrix is not positive definite") from None
                object.__setattr__(self, "matrix", M)
            else:
                object.__setattr__(self, "rows", np.asarray(self.rows, dtype=float))


TWO_SLS = WeightSpec()


@dataclass(frozen=True, eq=False)
class FirstStage:
    """OLS of each endogenous column on Z. ``coef`` is (l+q) x p; one column per regressor."""

    coef: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray


@dataclass(frozen=True, eq=False)
class Moments:
    """Cross-moments shared with the variance code.

    ``Szz`` is the weight analogue (n^-1 Z'Z for 2SLS, M or L'L/n otherwise)
    and ``weight_rows`` the matching L_i rows, or None for a fixed weight.
    """

    Sxz: np.ndarray
    Szz: np.ndarray
    Sze: np.ndarray
    H: np.ndarray
    weight_rows: np.ndarray | None


@dataclass(frozen=True, eq=False)
class EstimateResult:
    beta: np.ndarray
    residuals: np.ndarray
    first_stage: FirstStage
    moments: Moments
    weight: WeightSpec
    names: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.residuals.shape[0]

    def coef(self, name: str) -> float:
        return float(self.beta[self.names.index(name)])


def _chol(a, what):
    try:
        return linalg.cho_factor(a, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise RankDeficiencyError(f"{what} is not positive definite") from None


def _check_finite(design: DesignMatrices):
    for name, arr in (("Y", design.Y), ("X", design.X), ("Z", design.Z)):
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite values in {name}")


def fit_first_stage(design: DesignMatrices) -> FirstStage:
    """Regress each endogenous column on every instrument (covariates included)."""
    _check_finite(design)
    Z = design.Z
    D = design.X[:, design.l:]
    # QR keeps the fitted values well conditioned; Z has full column rank.
    q, r = np.linalg.qr(Z)
    try:
        coef = linalg.solve_triangular(r, q.T @ D, check_finite=False)
    except linalg.LinAlgError:
        raise RankDeficiencyError("Z'Z is singular") from None
    fitted = Z @ coef
    return FirstStage(coef, fitted, D - fitted)


def _weight_moments(design: DesignMatrices, weight: WeightSpec):
    n = design.n
    if weight.kind == "two_sls":
        return design.Z.T @ design.Z / n, design.Z
    if weight.matrix is not None:
        M = weight.matrix
        if M.shape != (design.Z.shape[1],) * 2:
            raise DataError(f"weight matrix must be {design.Z.shape[1]}x{design.Z.shape[1]}")
        return M, None
    L = weight.rows
    if L.shape != design.Z.shape:
        raise DataError(f"weight rows must have shape {design.Z.shape}")
    return L.T @ L / n, L


def fit_gmm_weighted(design: DesignMatrices, weight: WeightSpec = TWO_SLS) -> EstimateResult:
    """Linear GMM on E[Z_i e_i] = 0 with weight matrix ``weight``.

    The estimate is invariant to positive rescaling of the weight.
    """
    _check_finite(design)
    check_rank(design.X, design.Z)
    n = design.n
    X, Z, Y = design.X, design.Z, design.Y
    Szz, L = _weight_moments(design, weight)
    Sxz = X.T @ Z / n
    Szy = Z.T @ Y / n

    czz = _chol(Szz, "weight matrix")
    A_t = linalg.cho_solve(czz, Sxz.T, check_finite=False)  # Szz^-1 Szx
    H = Sxz @ A_t
    H = (H + H.T) / 2
    ch = _chol(H, "H = (X'Z/n)(Z'Z/n)^-1(Z'X/n)")
    beta = linalg.cho_solve(ch, A_t.T @ Szy, check_finite=False)

    e = Y - X @ beta
    moments = Moments(Sxz, Szz, Z.T @ e / n, H, L)
    return EstimateResult(beta, e, fit_first_stage(design), moments, weight, design.x_names)


def fit_2sls(design: DesignMatrices) -> EstimateResult:
    """Two-stage least squares, i.e. linear GMM with weight (Z'Z/n)^-1."""
    return fit_gmm_weighted(design, TWO_SLS)
