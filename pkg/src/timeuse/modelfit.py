"""Least-squares fitting of outcome models in ilr coordinates.

Raw minutes cannot be used as regressors directly: the four parts always
sum to 1440, so together with an intercept they are collinear. The ilr
coordinates remove that dependence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .composition import CompositionError, ilr
from .objectives import ilr_terms

N_LINEAR = 4
N_QUADRATIC = 10
QUADRATIC_DF = N_QUADRATIC - N_LINEAR


class SingularDesignError(np.linalg.LinAlgError):
    pass


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    compositions: np.ndarray  # (n, 4) minutes
    outcomes: np.ndarray  # (n,)

    def __post_init__(self):
        x = np.asarray(self.compositions, dtype=float)
        y = np.asarray(self.outcomes, dtype=float)
        if x.ndim != 2 or x.shape[1] != 4:
            raise ValueError("compositions must be an (n, 4) array")
        if len(y) != len(x):
            raise ValueError("one outcome per composition is required")
        if not np.all(x > 0):
            raise CompositionError("all composition parts must be positive")
        object.__setattr__(self, "compositions", x)
        object.__setattr__(self, "outcomes", y)

    def __len__(self) -> int:
        return len(self.outcomes)

    @classmethod
    def from_csv(cls, path: str | Path) -> "Dataset":
        """Columns sleep, sedentary, lpa, mvpa, outcome (header required)."""
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no data rows")
        cols = ("sleep", "sedentary", "lpa", "mvpa")
        x = np.array([[float(r[c]) for c in cols] for r in rows])
        y = np.array([float(r["outcome"]) for r in rows])
        return cls(x, y)


def ilr_design_matrix(data: Dataset | np.ndarray, quadratic: bool = True) -> np.ndarray:
    x = data.compositions if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    terms = ilr_terms(ilr(x))
    return terms if quadratic else terms[:, :N_LINEAR]


@dataclass(frozen=True)
class OlsFit:
    coefficients: np.ndarray
    rss: float
    n: int

    @property
    def p(self) -> int:
        return len(self.coefficients)


def ols_fit(X, y, rcond: float = 1e-10) -> OlsFit:
    """Ordinary least squares via a column-pivot-free QR decomposition.

    Raises SingularDesignError when X is (numerically) rank deficient.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p:
        raise InsufficientDataError(f"need more rows ({n}) than columns ({p})")
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if diag.min() <= rcond * max(diag.max(), 1.0):
        raise SingularDesignError("design matrix is rank deficient")
    beta = np.linalg.solve(r, q.T @ y)
    resid = y - X @ beta
    return OlsFit(beta, float(resid @ resid), n)


@dataclass(frozen=True)
class FTestResult:
    F: float
    p_value: float
    keep_quadratic: bool


def quadratic_f_test(linear: OlsFit, quad: OlsFit, n: int | None = None,
                     alpha: float = 0.05) -> FTestResult:
    """Nested-model F test for the six quadratic ilr terms."""
    n = quad.n if n is None else n
    if n <= N_QUADRATIC:
        raise InsufficientDataError("the quadratic model needs more than 10 observations")
    df_resid = n - N_QUADRATIC
    gain = max(linear.rss - quad.rss, 0.0)
    if gain == 0.0:
        return FTestResult(0.0, 1.0, False)
    if quad.rss <= 0:
        return FTestResult(np.inf, 0.0, True)
    F = (gain / QUADRATIC_DF) / (quad.rss / df_resid)
    p = float(stats.f.sf(F, QUADRATIC_DF, df_resid))
    return FTestResult(float(F), p, p < alpha)


@dataclass(frozen=True)
class ModelFit:
    coefficients: np.ndarray  # always 10 entries; zeros for dropped quadratic terms
    linear: OlsFit
    quadratic: OlsFit
    test: FTestResult


def fit_outcome_model(data: Dataset, alpha: float = 0.05) -> ModelFit:
    """Fit linear and quadratic models and keep the quadratic terms only if they help."""
    lin = ols_fit(ilr_design_matrix(data, quadratic=False), data.outcomes)
    quad = ols_fit(ilr_design_matrix(data, quadratic=True), data.outcomes)
    test = quadratic_f_test(lin, quad, len(data), alpha)
    if test.keep_quadratic:
        beta = quad.coefficients
    else:
        beta = np.concatenate([lin.coefficients, np.zeros(QUADRATIC_DF)])
    return ModelFit(beta, lin, quad, test)


def synthetic_dataset(beta, n: int, rng: np.random.Generator, noise: float = 0.0,
                      spread: float = 0.35) -> Dataset:
    """Compositions scattered around a typical day, outcomes from ``beta``."""
    centre = np.log([560.0, 560.0, 240.0, 80.0])
    logs = centre + spread * rng.standard_normal((n, 4))
    x = np.exp(logs)
    x = 1440.0 * x / x.sum(axis=1, keepdims=True)
    y = ilr_terms(ilr(x)) @ np.asarray(beta, dtype=float)
    if noise:
        y = y + noise * rng.standard_normal(n)
    return Dataset(x, y)
