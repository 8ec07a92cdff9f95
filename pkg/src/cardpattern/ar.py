"""Autoregressive AR(p) model of log-amounts fitted by least squares."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import comb

from .core import CardPatternError, SeriesTooShort

log = logging.getLogger(__name__)

COND_LIMIT = 1e12


class SingularDesign(CardPatternError):
    pass


class WrongLagCount(CardPatternError):
    pass


@dataclass(frozen=True)
class ArModel:
    coefficients: np.ndarray  # (a_0, a_1, ..., a_p)
    noise_variance: float
    p: int
    d: int = 0
    rows: int = 0
    rank_deficient: bool = False

    def __post_init__(self):
        if len(self.coefficients) != self.p + 1:
            raise ValueError("coefficient vector must have length p + 1")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be non-negative")


@dataclass(frozen=True)
class ArPrediction:
    mean: float
    variance: float
    lower: float
    upper: float


def difference(series: Sequence[float], d: int) -> np.ndarray:
    y = np.asarray(series, dtype=float)
    if d < 0:
        raise ValueError("d must be >= 0")
    if len(y) <= d:
        raise SeriesTooShort(f"need more than {d} observations to difference {d} times")
    return np.diff(y, n=d) if d else y.copy()


def design_matrix(series: np.ndarray, p: int, padding: str = "drop"):
    """Lag design matrix X (intercept column first) and targets Y.

    With ``padding="drop"`` only rows p+1..N are kept; ``"zero"`` keeps every
    row and fills missing lags with zeros.
    """
    y = np.asarray(series, dtype=float)
    n = len(y)
    if padding == "drop":
        rows = np.arange(p, n)
    elif padding == "zero":
        rows = np.arange(n)
    else:
        raise ValueError(f"unknown padding {padding!r}")
    X = np.zeros((len(rows), p + 1))
    X[:, 0] = 1.0
    for j in range(1, p + 1):
        src = rows - j
        ok = src >= 0
        X[ok, j] = y[src[ok]]
    return X, y[rows]


def fit_ar(series: Sequence[float], p: int, window: Optional[int] = None, d: int = 0,
           padding: str = "drop", strict: bool = False) -> ArModel:
    """Fit AR(p) on the (optionally d-times differenced) series.

    Coefficients solve the least-squares problem through an SVD of the
    design; the noise variance is the mean squared residual. A design whose
    normal matrix has condition number above 1e12 gets the minimum-norm
    solution (fitted values stay unique) unless `strict`, in which case
    `SingularDesign` is raised.
    """
    y = np.asarray(series, dtype=float)
    if window is not None:
        y = y[-window:]
    z = difference(y, d)
    n = len(z)
    usable = n - p if padding == "drop" else n
    if p < 1 or usable < p + 1:
        raise SeriesTooShort(f"AR({p}) needs at least {2 * p + 1} observations, got {n}")
    X, Y = design_matrix(z, p, padding)
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(Y)):
        raise SingularDesign("design contains non-finite values")
    sv = np.linalg.svd(X, compute_uv=False)
    cond = np.inf if sv[-1] == 0 else (sv[0] / sv[-1]) ** 2
    rank_deficient = cond > COND_LIMIT
    if rank_deficient:
        if strict:
            raise SingularDesign(f"condition number of X^T X is {cond:.3g}")
        log.debug("AR(%d) design is rank deficient (cond %.3g); using minimum-norm solution", p, cond)
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    resid = Y - X @ coef
    noise_variance = float(resid @ resid) / len(Y)
    return ArModel(coef, noise_variance, p, d, len(Y), rank_deficient)


def predict_next(model: ArModel, recent: Sequence[float], sd_multiplier: float = 2.0) -> ArPrediction:
    """One-step prediction in the model's (differenced) domain.

    `recent` holds the last p values, most recent last.
    """
    r = np.asarray(recent, dtype=float)
    if r.shape != (model.p,):
        raise WrongLagCount(f"expected {model.p} lagged values, got {r.size}")
    a = model.coefficients
    mean = float(a[0] + a[1:] @ r[::-1])
    return _prediction(mean, model.noise_variance, sd_multiplier)


def _prediction(mean, variance, sd_multiplier):
    half = sd_multiplier * math.sqrt(variance)
    return ArPrediction(mean, variance, mean - half, mean + half)


def forecast_level(model: ArModel, history: Sequence[float], sd_multiplier: float = 2.0) -> ArPrediction:
    """Predict the next value on the original (undifferenced) scale.

    The differenced-domain prediction is integrated back using the last d
    observed levels of `history`.
    """
    h = np.asarray(history, dtype=float)
    z = difference(h, model.d)
    if len(z) < model.p:
        raise WrongLagCount(f"need {model.p} differenced lags, history gives {len(z)}")
    step = predict_next(model, z[-model.p:], sd_multiplier)
    d = model.d
    if d == 0:
        return step
    # y_{N+1} = diff^d y_{N+1} - sum_{k=1..d} (-1)^k C(d,k) y_{N+1-k}
    level = step.mean
    for k in range(1, d + 1):
        level -= (-1) ** k * comb(d, k, exact=True) * h[-k]
    return _prediction(level, step.variance, sd_multiplier)


def fitted_values(model: ArModel, series: Sequence[float], padding: str = "drop"):
    """In-sample one-step fitted values for the fitted rows (differenced domain)."""
    X, Y = design_matrix(difference(series, model.d), model.p, padding)
    return X @ model.coefficients, Y


def rmse(model: ArModel, series=None) -> float:
    return math.sqrt(model.noise_variance)


def acf(series: Sequence[float], max_lag: int):
    """Sample autocorrelations r_1..r_max_lag and the +-2/sqrt(N) bound."""
    y = np.asarray(series, dtype=float)
    n = len(y)
    if n <= max_lag:
        raise SeriesTooShort(f"series of length {n} too short for {max_lag} lags")
    dev = y - y.mean()
    c0 = float(dev @ dev)
    bound = 2.0 / math.sqrt(n)
    if c0 <= 1e-300 or c0 <= 1e-24 * max(1.0, float(np.abs(y).max()) ** 2) * n:
        return np.zeros(max_lag), bound
    r = np.array([float(dev[:-k] @ dev[k:]) / c0 for k in range(1, max_lag + 1)])
    return r, bound


def select_order(series: Sequence[float], candidates: Iterable, window: Optional[int] = None,
                 padding: str = "drop"):
    """Pick the (p, d) candidate with the lowest RMSE.

    Ties go to smaller d, then smaller p. Candidates that fail to fit are
    skipped with a warning. Returns ``(best, table)`` where table maps each
    fitted candidate to its RMSE.
    """
    table = {}
    errors = []
    for p, d in candidates:
        try:
            table[(int(p), int(d))] = rmse(fit_ar(series, int(p), window, int(d), padding))
        except CardPatternError as exc:
            log.warning("candidate (p=%s, d=%s) skipped: %s", p, d, exc)
            errors.append(exc)
    if not table:
        raise errors[0] if errors else ValueError("no candidates given")
    best = min(table, key=lambda pd: (table[pd], pd[1], pd[0]))
    return best, table
