"""Heterogeneous-effect data generator, analytic population oracle, Monte-Carlo harness.

Units are one of ``never``, ``always`` or ``complier_j`` (j = 1..q). The
instrument is a single categorical draw Z in {0, ..., q}, coded as q mutually
exclusive indicators; ``complier_j`` is treated exactly when Z = j. Every
indicator therefore moves treatment weakly upward relative to Z = 0, so no
defiers exist by construction.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import stats

from ._parallel import map_replicates, substream
from .data import Dataset, DesignMatrices, design_from_arrays
from .diagnostics import first_stage_f, j_test
from .errors import DataError, IVRobustError
from .estimator import fit_2sls
from .variance import sigma_c, sigma_mr

PROB_TOL = 1e-12


@dataclass(frozen=True)
class DgpConfig:
    """Population and sample-size settings for :func:`draw_sample`.

    ``type_probs`` and ``effect_means`` are ordered (never, always,
    complier_1, ..., complier_q); ``instrument_probs`` is P(Z = 0), ..., P(Z = q).
    ``type_shift`` adds a type-specific mean to Y0, which makes D endogenous.
    ``noise_sd_treated`` (if set) replaces ``noise_sd`` for treated units.
    With ``n_clusters`` units are split round-robin into clusters, each with a
    shared N(0, cluster_sd^2) shift in Y0 and N(0, cluster_effect_sd^2) shift in
    the treatment effect.
    """

    type_probs: tuple[float, ...] = (0.3, 0.2, 0.25, 0.25)
    instrument_probs: tuple[float, ...] = (1 / 3, 1 / 3, 1 / 3)
    effect_means: tuple[float, ...] = (0.0, 3.0, 2.0, 4.0)
    effect_sd: float = 1.0
    baseline_mean: float = 0.0
    baseline_sd: float = 1.0
    type_shift: tuple[float, ...] | None = None
    noise_sd: float = 0.0
    noise_sd_treated: float | None = None
    n: int = 2000
    seed: int = 0
    n_clusters: int | None = None
    cluster_sd: float = 0.0
    cluster_effect_sd: float = 0.0

    def __post_init__(self):
        for name in ("type_probs", "instrument_probs", "effect_means", "type_shift"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(float(x) for x in v))
        self.validate()

    @property
    def q(self) -> int:
        return len(self.instrument_probs) - 1

    def validate(self) -> None:
        tp, ip = np.array(self.type_probs), np.array(self.instrument_probs)
        for label, pr in (("type_probs", tp), ("instrument_probs", ip)):
            if np.any(pr < 0) or np.any(pr > 1) or not np.all(np.isfinite(pr)):
                raise DataError(f"{label} must lie in [0, 1]")
            if abs(pr.sum() - 1) > PROB_TOL:
                raise DataError(f"{label} must sum to 1 (got {pr.sum():.12g})")
        q = self.q
        if q < 1:
            raise DataError("instrument_probs needs at least two categories (Z = 0 and Z = 1)")
        if len(tp) != q + 2:
            raise DataError(f"type_probs must have q + 2 = {q + 2} entries (never, always, compliers)")
        if len(self.effect_means) != q + 2:
            raise DataError(f"effect_means must have {q + 2} entries")
        if self.type_shift is not None and len(self.type_shift) != q + 2:
            raise DataError(f"type_shift must have {q + 2} entries")
        for name in ("effect_sd", "baseline_sd", "noise_sd", "cluster_sd", "cluster_effect_sd"):
            if not getattr(self, name) >= 0:
                raise DataError(f"{name} must be >= 0")
        if self.noise_sd_treated is not None and not self.noise_sd_treated >= 0:
            raise DataError("noise_sd_treated must be >= 0")
        if int(self.n) != self.n or self.n < 1:
            raise DataError("n must be a positive integer")
        if self.n_clusters is not None and not (1 <= self.n_clusters <= self.n):
            raise DataError("n_clusters must lie in [1, n]")

    def replace(self, **changes) -> "DgpConfig":
        d = asdict(self)
        d.update(changes)
        return DgpConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DgpConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown DGP config keys: {', '.join(sorted(unknown))}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise DataError(f"invalid DGP config: {exc}") from None

    @classmethod
    def from_json(cls, path) -> "DgpConfig":
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: invalid JSON ({exc})") from None


def heterogeneous_config(**overrides) -> DgpConfig:
    """Two instruments with LATEs 2 and 4, symmetric complier masses and cells."""
    return DgpConfig(**overrides)


def constant_effect_config(effect: float = 3.0, **overrides) -> DgpConfig:
    """Same design as :func:`heterogeneous_config` with a common, non-random effect."""
    base = dict(effect_means=(effect,) * 4, effect_sd=0.0)
    base.update(overrides)
    return DgpConfig(**base)


def _effective_sd(config: DgpConfig, d):
    if config.noise_sd_treated is None:
        return config.noise_sd
    return np.where(d == 1, config.noise_sd_treated, config.noise_sd)


def draw_sample(config: DgpConfig, rng: np.random.Generator | None = None, latent: bool = False) -> Dataset:
    """Draw ``config.n`` units. Columns: Y, D, Z1..Zq (+ cluster, and Y0/rho/type if ``latent``)."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n, q = config.n, config.q
    types = rng.choice(q + 2, size=n, p=np.array(config.type_probs))
    z = rng.choice(q + 1, size=n, p=np.array(config.instrument_probs))
    d = np.where(types == 1, 1.0, np.where(types >= 2, (z == types - 1).astype(float), 0.0))

    means = np.array(config.effect_means)
    rho = means[types] + config.effect_sd * rng.standard_normal(n)
    shift = np.zeros(q + 2) if config.type_shift is None else np.array(config.type_shift)
    y0 = config.baseline_mean + shift[types] + config.baseline_sd * rng.standard_normal(n)
    noise = _effective_sd(config, d) * rng.standard_normal(n)

    cols = {}
    if config.n_clusters is not None:
        g = np.arange(n) % config.n_clusters
        y0 = y0 + config.cluster_sd * rng.standard_normal(config.n_clusters)[g]
        rho = rho + config.cluster_effect_sd * rng.standard_normal(config.n_clusters)[g]
    y = y0 + d * rho + noise
    cols["Y"] = y
    cols["D"] = d
    for j in range(1, q + 1):
        cols[f"Z{j}"] = (z == j).astype(float)
    if config.n_clusters is not None:
        cols["cluster"] = g.astype(float)
    if latent:
        cols["Y0"] = y0
        cols["rho"] = rho
        cols["type"] = types.astype(float)
    return Dataset(tuple(cols), cols)


def sample_design(data: Dataset, q: int) -> DesignMatrices:
    Z = np.column_stack([data[f"Z{j}"] for j in range(1, q + 1)])
    cl = data["cluster"] if "cluster" in data.columns else None
    return design_from_arrays(data["Y"], data["D"], Z, cluster_ids=cl)


@dataclass(frozen=True, eq=False)
class PopulationOracle:
    """Closed-form population quantities of a :class:`DgpConfig`.

    ``late`` holds the per-instrument Wald ratios (NaN where the instrument has
    no compliers); ``xi`` the exact weights with ``rho0 = sum xi_j late_j`` over
    defined instruments. ``convex`` is True when every weight is >= 0, which
    happens exactly when each defined instrument is positively correlated with D.
    """

    late: np.ndarray
    rho0: float
    alpha0: float
    xi: np.ndarray
    convex: bool
    defined: np.ndarray
    Ezz: np.ndarray
    Ezx: np.ndarray
    Ezy: np.ndarray
    Eze: np.ndarray
    first_stage_cov: np.ndarray
    flags: tuple[str, ...] = field(default=())


def population_estimand(config: DgpConfig) -> PopulationOracle:
    """Population 2SLS estimand and decomposition into instrument-specific LATEs."""
    q = config.q
    tp = np.array(config.type_probs)
    pz = np.array(config.instrument_probs)
    m = np.array(config.effect_means)
    shift = np.zeros(q + 2) if config.type_shift is None else np.array(config.type_shift)

    # Cell moments given Z = z; type is independent of Z.
    s = np.concatenate([[0.0], tp[2:]])           # complier mass moved into treatment by cell z
    ed = tp[1] + s                                # E[D | Z = z]
    edr = tp[1] * m[1] + s * np.concatenate([[0.0], m[2:]])
    ey0 = config.baseline_mean + tp @ shift
    ey = ey0 + edr                                # E[Y | Z = z]

    Ezz = np.zeros((q + 1, q + 1))
    Ezz[0, 0] = 1.0
    Ezz[0, 1:] = Ezz[1:, 0] = pz[1:]
    Ezz[1:, 1:] = np.diag(pz[1:])
    Ed, Ey = pz @ ed, pz @ ey
    Ezx = np.column_stack([np.concatenate([[1.0], pz[1:]]), np.concatenate([[Ed], pz[1:] * ed[1:]])])
    Ezy = np.concatenate([[Ey], pz[1:] * ey[1:]])

    flags = []
    defined = (s[1:] > 0) & (pz[1:] > 0) & (pz[0] > 0)
    late = np.full(q, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        late[defined] = ((ey[1:] - ey[0]) / (ed[1:] - ed[0]))[defined]
    for j in np.flatnonzero(~defined):
        flags.append(f"instrument Z{j + 1} has no compliers or empty cells; its LATE is undefined")

    # Population 2SLS over instruments that carry variation.
    usable = np.concatenate([[True], pz[1:] > 0])
    Szz, Szx, Szy = Ezz[np.ix_(usable, usable)], Ezx[usable], Ezy[usable]
    A = np.linalg.solve(Szz, Szx).T
    H = A @ Szx
    if abs(np.linalg.det(H)) < 1e-14:
        raise DataError("population first stage is zero: rho0 is not identified")
    beta0 = np.linalg.solve(H, A @ Szy)
    alpha0, rho0 = float(beta0[0]), float(beta0[1])
    Eze = Ezy - Ezx @ beta0

    sbar = pz @ s
    cov_dz = pz[1:] * (s[1:] - sbar)                  # Cov(D, Z_j)
    var_fs = pz @ (s - sbar) ** 2                     # Var(E[D | Z])
    xi = np.full(q, np.nan)
    xi[defined] = (pz[1:] * s[1:] * (s[1:] - sbar))[defined] / var_fs
    convex = bool(np.all(xi[defined] >= 0))
    if not convex:
        flags.append("some LATE weights are negative: rho0 is not a convex combination")
    return PopulationOracle(late, rho0, alpha0, xi, convex, defined, Ezz, Ezx, Ezy, Eze, cov_dz, tuple(flags))


@dataclass(frozen=True, eq=False)
class MonteCarloReport:
    config: DgpConfig
    rho0: float
    reps: int
    completed: int
    skipped: int
    mean_rho: float
    sd_rho: float
    mean_se_c: float
    mean_se_mr: float
    ratio_c: float
    ratio_mr: float
    j_reject: float
    coverage_c: float
    coverage_mr: float
    level: float
    rows: np.ndarray  # columns: rep, rho_hat, se_c, se_mr, j_pvalue, f_robust, pct_se_diff

    ROW_FIELDS = ("rep", "rho_hat", "se_c", "se_mr", "j_pvalue", "f_robust", "pct_se_diff")

    def summary(self) -> dict:
        keys = ("rho0", "reps", "completed", "skipped", "mean_rho", "sd_rho", "mean_se_c", "mean_se_mr",
                "ratio_c", "ratio_mr", "j_reject", "coverage_c", "coverage_mr", "level")
        return {k: getattr(self, k) for k in keys}

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.ROW_FIELDS)
        for r in self.rows:
            w.writerow([int(r[0])] + [repr(float(x)) for x in r[1:]])
        return buf.getvalue()


def _replicate(config: DgpConfig, seed: int, r: int):
    rng = substream(seed, r)
    data = draw_sample(config, rng)
    try:
        design = sample_design(data, config.q)
        est = fit_2sls(design)
        se_c = sigma_c(est, design).se[-1]
        se_mr = sigma_mr(est, design).se[-1]
        j = j_test(est, design)
        try:
            f = float(first_stage_f(design, "robust", est.first_stage)[0])
        except IVRobustError:
            f = float("nan")
    except IVRobustError:
        return None
    pj = j.pvalue if j.pvalue is not None else float("nan")
    denom = se_mr + se_c
    pct = 2 * (se_mr - se_c) / denom if denom > 0 else float("nan")
    return (r, est.beta[-1], se_c, se_mr, pj, f, pct)


def run_monte_carlo(config: DgpConfig, reps: int, seed: int | None = None, level: float = 0.05,
                    threads: int | None = None) -> MonteCarloReport:
    """Replicate draw -> 2SLS -> (SE_C, SE_MR, J, robust F) ``reps`` times.

    Replicate r uses a random stream keyed by (seed, r), so the report does not
    depend on the number of threads. Replicates that fail a rank condition are
    skipped and counted.
    """
    if reps < 2:
        raise DataError("need at least two replications")
    if not 0 < level < 1:
        raise DataError("level must lie in (0, 1)")
    seed = config.seed if seed is None else seed
    oracle = population_estimand(config)
    results = map_replicates(lambda r: _replicate(config, seed, r), reps, threads)
    rows = np.array([r for r in results if r is not None], dtype=float).reshape(-1, 7)
    skipped = reps - rows.shape[0]
    if rows.shape[0] < 2:
        raise IVRobustError("fewer than two replicates succeeded")

    rho, se_c, se_mr, pj = rows[:, 1], rows[:, 2], rows[:, 3], rows[:, 4]
    sd = float(np.std(rho, ddof=1))
    crit = stats.norm.ppf(1 - level / 2)
    cover = lambda se: float(np.mean(np.abs(rho - oracle.rho0) <= crit * se))
    valid_j = ~np.isnan(pj)
    j_reject = float(np.mean(pj[valid_j] < level)) if valid_j.any() else math.nan
    return MonteCarloReport(
        config=config, rho0=oracle.rho0, reps=reps, completed=rows.shape[0], skipped=skipped,
        mean_rho=float(rho.mean()), sd_rho=sd,
        mean_se_c=float(se_c.mean()), mean_se_mr=float(se_mr.mean()),
        ratio_c=float(se_c.mean() / sd), ratio_mr=float(se_mr.mean() / sd),
        j_reject=j_reject, coverage_c=cover(se_c), coverage_mr=cover(se_mr), level=level, rows=rows,
    )
