"""Misspecification-robust percentile-t bootstrap for 2SLS.

Each replicate recomputes the estimate and the multiple-LATEs-robust variance
on the resample and forms T* = (b*_m - b_m) / sqrt(Sigma*_MR,mm / n). The
conventional variance is not a valid studentizer here because the
over-identifying moment condition fails under heterogeneous effects.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from ._parallel import map_replicates, substream
from .data import DesignMatrices
from .errors import DataError, DegenerateInferenceError, IVRobustError, NumericalError
from .estimator import fit_2sls
from .variance import sigma_c, sigma_cmr, sigma_mr

logger = logging.getLogger(__name__)

LEVELS = (0.10, 0.05, 0.01)
MAX_ATTEMPTS = 50


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """``t_stats`` is B x k (one column per coefficient), ordered by replicate index."""

    t_stats: np.ndarray
    index: int
    estimate: np.ndarray
    se: np.ndarray
    failures: int
    flavor: str
    clustered: bool
    warning: str | None = None

    @property
    def B(self) -> int:
        return self.t_stats.shape[0]

    def draws(self, index: int | None = None) -> np.ndarray:
        return self.t_stats[:, self.index if index is None else index]

    def critical_values(self, index: int | None = None, levels=LEVELS) -> dict:
        """Equal-tailed (lower, upper) quantiles and the symmetric |T*| quantile per level."""
        t = self.draws(index)
        out = {}
        for a in levels:
            lo, hi = np.quantile(t, [a / 2, 1 - a / 2])
            out[a] = {"equal_tailed": (float(lo), float(hi)), "symmetric": float(np.quantile(np.abs(t), 1 - a))}
        return out

    def ci(self, level: float = 0.05, kind: str = "equal_tailed", index: int | None = None):
        m = self.index if index is None else index
        return percentile_t_ci(self.draws(m), self.estimate[m], self.se[m], level, kind)


def percentile_t_ci(t_stats, estimate: float, se: float, level: float = 0.05, kind: str = "equal_tailed"):
    """Percentile-t interval ``[b - q_hi se, b - q_lo se]`` (or ``b -/+ q_|T| se``)."""
    if not 0 < level < 1:
        raise DataError("level must lie in (0, 1)")
    t = np.asarray(t_stats, dtype=float)
    if t.size == 0:
        raise DataError("no bootstrap draws")
    if kind == "equal_tailed":
        lo, hi = np.quantile(t, [level / 2, 1 - level / 2])
        return float(estimate - hi * se), float(estimate - lo * se)
    if kind == "symmetric":
        c = np.quantile(np.abs(t), 1 - level)
        return float(estimate - c * se), float(estimate + c * se)
    raise DataError(f"unknown interval kind {kind!r}")


def _variance(est, design, flavor, clustered, correction):
    if clustered:
        return sigma_cmr(est, design, correction=correction)
    if flavor == "MR":
        return sigma_mr(est, design)
    if flavor == "C":
        return sigma_c(est, design)
    raise DataError(f"unknown studentizing flavor {flavor!r}")


def _resample(design: DesignMatrices, rng, clustered: bool, groups):
    if not clustered:
        return design.take(rng.integers(0, design.n, design.n))
    picks = rng.integers(0, len(groups), len(groups))
    rows = np.concatenate([groups[g] for g in picks])
    # A cluster drawn twice counts as two distinct clusters.
    ids = np.repeat(np.arange(len(picks)), [len(groups[g]) for g in picks])
    return design.take(rows, cluster_ids=ids)


def bootstrap_t(design: DesignMatrices, index: int = -1, B: int = 999, seed: int = 0, clustered: bool = False,
                threads: int | None = None, flavor: str = "MR", correction: bool = True) -> BootstrapResult:
    """Percentile-t bootstrap draws for coefficient ``index``.

    Rows are resampled iid, or whole clusters when ``clustered`` (studentizing
    then uses the cluster-robust variance). Resamples on which the design is
    rank deficient or the variance vanishes are redrawn and counted in
    ``failures``; more than 50 % failed draws aborts. Replicate b draws from a
    stream keyed by (seed, b), so results do not depend on ``threads``.
    """
    if B < 1:
        raise DataError("B must be at least 1")
    if B < 99:
        warnings.warn("fewer than 99 bootstrap replicates; critical values will be coarse", stacklevel=2)
    groups = None
    if clustered:
        if design.cluster_ids is None:
            raise DataError("cluster id required for the cluster bootstrap")
        order = np.argsort(design.cluster_ids, kind="stable")
        bounds = np.cumsum(np.bincount(design.cluster_ids))[:-1]
        groups = np.split(order, bounds)
    k = design.k
    index = index % k

    base = fit_2sls(design)
    base_var = _variance(base, design, flavor, clustered, correction)
    if np.any(base_var.se == 0):
        raise DegenerateInferenceError("the estimated variance is zero; studentized bootstrap is undefined")

    def replicate(b):
        rng = substream(seed, b)
        fails = 0
        for _ in range(MAX_ATTEMPTS):
            try:
                star = _resample(design, rng, clustered, groups)
                est = fit_2sls(star)
                se = _variance(est, star, flavor, clustered, correction).se
            except (IVRobustError, np.linalg.LinAlgError):
                fails += 1
                continue
            if np.any(se == 0) or not np.all(np.isfinite(se)):
                fails += 1
                continue
            return (est.beta - base.beta) / se, fails
        return None, fails

    out = map_replicates(replicate, B, threads)
    failures = sum(f for _, f in out)
    if any(t is None for t, _ in out) or failures > 0.5 * (B + failures):
        raise DegenerateInferenceError(
            f"bootstrap aborted: {failures} of {B + failures} resamples were degenerate"
        )
    t_stats = np.vstack([t for t, _ in out])
    note = None
    if failures > 0.05 * B:
        note = f"{failures} degenerate resamples were redrawn ({failures / B:.1%} of B)"
        logger.warning(note)
    return BootstrapResult(t_stats, index, base.beta, base_var.se, failures, base_var.flavor, clustered, note)
