"""Tabular ingestion and design-matrix assembly."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, RankDeficiencyError

logger = logging.getLogger(__name__)

CONSTANT = "const"
RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class Dataset:
    """Named numeric columns of equal length.

    ``dropped_count`` records how many rows listwise deletion removed on load.
    """

    column_names: tuple[str, ...]
    columns: Mapping[str, np.ndarray]
    dropped_count: int = 0

    def __post_init__(self):
        if len(set(self.column_names)) != len(self.column_names):
            raise DataError("duplicate column names")
        lengths = {len(self.columns[c]) for c in self.column_names}
        if len(lengths) > 1:
            raise DataError(f"columns have unequal lengths: {sorted(lengths)}")
        if not lengths or lengths == {0}:
            raise DataError("zero observations")
        for c in self.column_names:
            if not np.all(np.isfinite(self.columns[c])):
                raise DataError(f"column {c!r} has non-finite values")

    @property
    def n(self) -> int:
        return len(self.columns[self.column_names[0]])

    @classmethod
    def from_arrays(cls, **columns) -> "Dataset":
        cols = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
        return cls(tuple(cols), cols)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise DataError(f"unknown column {name!r}") from None

    def take(self, rows) -> "Dataset":
        """Row subset (or resample) as a new Dataset."""
        rows = np.asarray(rows)
        return Dataset(self.column_names, {c: self.columns[c][rows] for c in self.column_names})


def load_csv(path, delimiter: str = ",", na_token: str = "NA") -> Dataset:
    """Read a headed CSV of numbers, dropping any row containing ``na_token``.

    Parameters
    ----------
    path : str or Path
        File to read. The first row must be a header.
    delimiter : str
        Field separator.
    na_token : str
        Field value treated as missing. Surrounding whitespace is ignored.

    Returns
    -------
    Dataset
        With ``dropped_count`` set to the number of rows removed.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh, delimiter=delimiter))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc

    rows = [r for r in rows if r]  # tolerate trailing blank lines
    if not rows:
        raise DataError(f"{path}: missing header")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]

    kept: list[list[float]] = []
    dropped = 0
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        values = []
        missing = False
        for name, raw in zip(header, row):
            raw = raw.strip()
            if raw == na_token:
                missing = True
                continue
            try:
                x = float(raw)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value {raw!r} in column {name!r}") from None
            if not math.isfinite(x):
                missing = True
            values.append(x)
        if missing:
            dropped += 1
        else:
            kept.append(values)

    if dropped:
        logger.warning("%s: dropped %d of %d rows with missing values", path, dropped, len(body))
    if not kept:
        raise DataError(f"{path}: zero observations")
    arr = np.array(kept, dtype=float)
    return Dataset(tuple(header), {h: arr[:, j].copy() for j, h in enumerate(header)}, dropped)


@dataclass(frozen=True)
class ModelSpec:
    """Variable roles. The constant is prepended to ``covariates`` unless ``constant=False``."""

    outcome: str
    endogenous: Sequence[str]
    instruments: Sequence[str]
    covariates: Sequence[str] = ()
    cluster: str | None = None
    constant: bool = True

    def __post_init__(self):
        for attr in ("endogenous", "instruments", "covariates"):
            value = getattr(self, attr)
            if isinstance(value, str):
                value = (value,)
            object.__setattr__(self, attr, tuple(value))

    def covariate_names(self) -> tuple[str, ...]:
        return ((CONSTANT,) if self.constant else ()) + tuple(self.covariates)

    def validate(self, data: Dataset | None = None) -> None:
        if not self.endogenous:
            raise DataError("at least one endogenous variable is required")
        if len(self.instruments) < len(self.endogenous):
            raise DataError(
                f"need at least as many instruments as endogenous variables "
                f"(q={len(self.instruments)} < p={len(self.endogenous)})"
            )
        if not self.covariate_names():
            raise DataError("at least one covariate (or the constant) is required")
        roles = [self.outcome, *self.endogenous, *self.instruments, *self.covariates]
        if self.cluster is not None:
            roles.append(self.cluster)
        seen = set()
        for name in roles:
            if name in seen:
                raise DataError(f"label {name!r} appears in more than one role")
            seen.add(name)
        if self.constant and CONSTANT in seen:
            raise DataError(f"{CONSTANT!r} is reserved for the synthetic constant")
        if data is not None:
            missing = [r for r in roles if r not in data.columns]
            if missing:
                raise DataError(f"columns not found in data: {', '.join(missing)}")


@dataclass(frozen=True, eq=False)
class DesignMatrices:
    """Y, X = [W, D] and Z = [W, excluded instruments], plus optional cluster codes."""

    Y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    x_names: tuple[str, ...]
    z_names: tuple[str, ...]
    n_covariates: int
    cluster_ids: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def l(self) -> int:  # noqa: E743
        return self.n_covariates

    @property
    def p(self) -> int:
        return self.X.shape[1] - self.n_covariates

    @property
    def q(self) -> int:
        return self.Z.shape[1] - self.n_covariates

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def n_clusters(self) -> int:
        return 0 if self.cluster_ids is None else int(self.cluster_ids.max()) + 1

    def take(self, rows, cluster_ids=None) -> "DesignMatrices":
        """Row subset, optionally with replacement cluster codes (used by resampling)."""
        rows = np.asarray(rows)
        if cluster_ids is None and self.cluster_ids is not None:
            cluster_ids = _encode(self.cluster_ids[rows])
        return DesignMatrices(
            self.Y[rows], self.X[rows], self.Z[rows], self.x_names, self.z_names,
            self.n_covariates, cluster_ids,
        )


def _encode(values):
    _, codes = np.unique(values, return_inverse=True)
    return codes.astype(np.intp)


def numerical_rank(a, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.atleast_2d(a), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def _dependent_columns(a, names) -> list[str]:
    # Greedy scan: a column that does not raise the rank of its predecessors is flagged.
    flagged = []
    keep: list[int] = []
    scale = np.linalg.norm(a, 2) if a.size else 0.0
    for j, name in enumerate(names):
        trial = a[:, keep + [j]]
        s = np.linalg.svd(trial, compute_uv=False)
        if s[-1] <= RANK_RTOL * max(scale, s[0]):
            flagged.append(name)
        else:
            keep.append(j)
    return flagged


def check_rank(X, Z, x_names=None, z_names=None) -> None:
    """Raise RankDeficiencyError unless rank(Z) = ncol(Z) and rank(X'Z) = ncol(X)."""
    if numerical_rank(Z) < Z.shape[1]:
        msg = "instrument matrix Z is rank deficient"
        if z_names is not None:
            bad = _dependent_columns(Z, z_names)
            if bad:
                msg += f" (collinear columns: {', '.join(bad)})"
        raise RankDeficiencyError(msg)
    XZ = X.T @ Z
    if numerical_rank(XZ) < X.shape[1]:
        msg = "X'Z has deficient rank: the instruments do not identify every regressor"
        if x_names is not None:
            bad = _dependent_columns(Z.T @ X, x_names)
            if bad:
                msg += f" (unidentified: {', '.join(bad)})"
        raise RankDeficiencyError(msg)


def build_design(data: Dataset, spec: ModelSpec) -> DesignMatrices:
    """Assemble Y, X, Z in the order fixed by ``spec`` and verify the rank conditions."""
    spec.validate(data)
    n = data.n
    w_cols = [np.ones(n) if c == CONSTANT and spec.constant else data[c] for c in spec.covariate_names()]
    W = np.column_stack(w_cols)
    D = np.column_stack([data[c] for c in spec.endogenous])
    E = np.column_stack([data[c] for c in spec.instruments])
    X = np.hstack([W, D])
    Z = np.hstack([W, E])
    x_names = spec.covariate_names() + tuple(spec.endogenous)
    z_names = spec.covariate_names() + tuple(spec.instruments)
    check_rank(X, Z, x_names, z_names)
    cluster_ids = _encode(data[spec.cluster]) if spec.cluster is not None else None
    return DesignMatrices(
        np.array(data[spec.outcome], dtype=float), X, Z, x_names, z_names, W.shape[1], cluster_ids,
    )


def design_from_arrays(y, endog, instruments, covariates=None, constant=True, cluster_ids=None) -> DesignMatrices:
    """Build a design directly from arrays (names are generated)."""
    y = np.asarray(y, dtype=float)
    D = np.asarray(endog, dtype=float).reshape(len(y), -1)
    E = np.asarray(instruments, dtype=float).reshape(len(y), -1)
    cols, names = [], []
    if constant:
        cols.append(np.ones((len(y), 1)))
        names.append(CONSTANT)
    if covariates is not None:
        C = np.asarray(covariates, dtype=float).reshape(len(y), -1)
        cols.append(C)
        names += [f"w{j + 1}" for j in range(C.shape[1])]
    if not cols:
        raise DataError("at least one covariate (or the constant) is required")
    if E.shape[1] < D.shape[1]:
        raise DataError("need at least as many instruments as endogenous variables")
    W = np.hstack(cols)
    X = np.hstack([W, D])
    Z = np.hstack([W, E])
    x_names = tuple(names) + tuple(f"d{j + 1}" for j in range(D.shape[1]))
    z_names = tuple(names) + tuple(f"z{j + 1}" for j in range(E.shape[1]))
    check_rank(X, Z, x_names, z_names)
    codes = None if cluster_ids is None else _encode(np.asarray(cluster_ids))
    return DesignMatrices(y, X, Z, x_names, z_names, W.shape[1], codes)
