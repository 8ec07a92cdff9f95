"""Gaussian-process regression of log-amounts over the transaction index.

Squared-exponential kernel plus white noise, zero mean function, and MAP
hyperparameters under a Gamma(2, 2) prior on the length-scale found with
Nelder-Mead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

from .core import CardPatternError, SeriesTooShort
from .simplex import NoProgress, nelder_mead

log = logging.getLogger(__name__)

GAMMA_SHAPE = 2.0
GAMMA_SCALE = 2.0
JITTER = 1e-9
NEG_VAR_TOL = 1e-10


class NotPositiveDefinite(CardPatternError):
    pass


class AllRestartsFailed(CardPatternError):
    pass


class NumericalBreakdown(CardPatternError):
    pass


@dataclass(frozen=True)
class KernelParams:
    l: float
    sigma_f: float
    sigma_n: float

    def __post_init__(self):
        if not self.l > 0:
            raise ValueError("length-scale l must be positive")
        if not self.sigma_f > 0:
            raise ValueError("sigma_f must be positive")
        if not self.sigma_n >= 0:
            raise ValueError("sigma_n must be non-negative")

    @property
    def prior_variance(self) -> float:
        return self.sigma_f ** 2 + self.sigma_n ** 2


@dataclass(frozen=True)
class GpModel:
    params: KernelParams
    inputs: np.ndarray
    targets: np.ndarray
    solved_alpha: np.ndarray
    chol: np.ndarray
    offset: float = 0.0
    jitter: float = 0.0
    log_posterior: float = float("nan")
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class GpPrediction:
    mean: float
    variance: float
    lower: float
    upper: float


def kernel(x, x2, params: KernelParams):
    """k(x, x') = sf^2 exp(-(x - x')^2 / (2 l^2)) + sn^2 [x == x']."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    r = x - x2
    k = params.sigma_f ** 2 * np.exp(-(r * r) / (2.0 * params.l ** 2))
    k = k + params.sigma_n ** 2 * (x == x2)
    return float(k) if k.ndim == 0 else k


def gram(x, params: KernelParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return kernel(x[:, None], x[None, :], params)


def log_gamma_prior(l: float, shape: float = GAMMA_SHAPE, scale: float = GAMMA_SCALE) -> float:
    if not l > 0:
        return -math.inf
    return (shape - 1.0) * math.log(l) - l / scale - math.lgamma(shape) - shape * math.log(scale)


def _factor(K: np.ndarray, sigma_f: float):
    """Cholesky factor, retrying once with diagonal jitter."""
    try:
        return cholesky(K, lower=True, check_finite=False), 0.0
    except (LinAlgError, ValueError):
        pass
    jitter = JITTER * sigma_f ** 2
    try:
        L = cholesky(K + jitter * np.eye(len(K)), lower=True, check_finite=False)
    except (LinAlgError, ValueError) as exc:
        raise NotPositiveDefinite(str(exc)) from None
    return L, jitter


def _marginal_from_gram(K, y, sigma_f):
    L, jitter = _factor(K, sigma_f)
    alpha = cho_solve((L, True), y, check_finite=False)
    n = len(y)
    value = -0.5 * float(y @ alpha) - float(np.log(np.diag(L)).sum()) - 0.5 * n * math.log(2 * math.pi)
    return value, L, alpha, jitter


def log_marginal_likelihood(params: KernelParams, x, y) -> float:
    y = np.asarray(y, dtype=float)
    value, *_ = _marginal_from_gram(gram(x, params), y, params.sigma_f)
    return value


def log_posterior(params: KernelParams, x, y) -> float:
    """Log marginal likelihood plus the Gamma(2, 2) log-density of l.

    The flat priors on sigma_f and sigma_n add nothing.
    """
    return log_marginal_likelihood(params, x, y) + log_gamma_prior(params.l)


def _unpack(theta):
    return KernelParams(float(theta[0]), math.exp(theta[1]), math.exp(theta[2]))


def fit_gp(series: Sequence[float], restarts: int = 10, seed: int = 0, center: bool = False,
           window: Optional[int] = None, tolerance: float = 1e-9, max_iter: int = 2000) -> GpModel:
    """MAP fit over `restarts` seeded Nelder-Mead runs; the best run is kept.

    Search space is (l, ln sf, ln sn). Start points draw l from the Gamma
    prior, sf around the RMS of the targets and sn below their standard
    deviation.
    """
    y_all = np.asarray(series, dtype=float)
    if window is not None:
        y_all = y_all[-window:]
    n = len(y_all)
    if n < 2:
        raise SeriesTooShort("a GP fit needs at least 2 observations")
    offset = float(y_all.mean()) if center else 0.0
    y = y_all - offset
    x = np.arange(1.0, n + 1.0)
    d2 = (x[:, None] - x[None, :]) ** 2
    eye = np.eye(n)

    def objective(theta):
        l = theta[0]
        if not l > 0 or abs(theta[1]) > 30 or abs(theta[2]) > 30:
            return math.inf
        sf2 = math.exp(2 * theta[1])
        K = sf2 * np.exp(-d2 / (2.0 * l * l)) + math.exp(2 * theta[2]) * eye
        try:
            value, *_ = _marginal_from_gram(K, y, math.sqrt(sf2))
        except NotPositiveDefinite:
            return math.inf
        return -(value + log_gamma_prior(l))

    rng = np.random.default_rng(seed)
    sd = float(y.std()) or 1.0
    rms = float(np.sqrt(np.mean(y * y))) or 1.0
    best = None
    starts = []
    for _ in range(restarts):
        theta0 = np.array([
            rng.gamma(GAMMA_SHAPE, GAMMA_SCALE),
            math.log(rms) + rng.uniform(-0.5, 0.5),
            math.log(sd) + rng.uniform(-1.5, 0.0),
        ])
        starts.append(theta0)
        try:
            res = nelder_mead(objective, theta0, tolerance=tolerance, max_iter=max_iter,
                              step=np.array([0.5 * theta0[0], 0.3, 0.3]))
        except NoProgress:
            continue
        if math.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise AllRestartsFailed(f"all {restarts} restarts failed")

    params = _unpack(best.x)
    value, L, alpha, jitter = _marginal_from_gram(gram(x, params), y, params.sigma_f)
    meta = {"restarts": restarts, "seed": seed, "iterations": best.iterations,
            "converged": best.converged, "starts": [s.tolist() for s in starts]}
    if jitter:
        meta["jitter"] = jitter
    return GpModel(params, x, y, alpha, L, offset, jitter, value + log_gamma_prior(params.l), meta)


def model_from_params(series: Sequence[float], params: KernelParams, center: bool = False) -> GpModel:
    """Condition a GP with fixed hyperparameters on `series`."""
    y_all = np.asarray(series, dtype=float)
    offset = float(y_all.mean()) if center else 0.0
    y = y_all - offset
    x = np.arange(1.0, len(y) + 1.0)
    value, L, alpha, jitter = _marginal_from_gram(gram(x, params), y, params.sigma_f)
    return GpModel(params, x, y, alpha, L, offset, jitter, value + log_gamma_prior(params.l))


def predict_gp(model: GpModel, x_star: float, sd_multiplier: float = 2.0) -> GpPrediction:
    """Predictive mean and variance of the observation at index `x_star`."""
    p = model.params
    k_star = kernel(float(x_star), model.inputs, p)
    mean = float(k_star @ model.solved_alpha) + model.offset
    v = solve_triangular(model.chol, k_star, lower=True, check_finite=False)
    var = p.prior_variance - float(v @ v)
    if var < 0:
        if var < -NEG_VAR_TOL:
            raise NumericalBreakdown(f"negative predictive variance {var:.3g}")
        var = 0.0
    half = sd_multiplier * math.sqrt(var)
    return GpPrediction(mean, var, mean - half, mean + half)


def smooth_gp(model: GpModel):
    """Posterior of the noisy observation at each training index.

    Uses the latent posterior (no Kronecker term in the cross-covariance)
    plus the noise variance, so in-sample points are not trivially
    interpolated.
    """
    p = model.params
    x = model.inputs
    Kf = p.sigma_f ** 2 * np.exp(-((x[:, None] - x[None, :]) ** 2) / (2 * p.l ** 2))
    mean = Kf @ model.solved_alpha + model.offset
    V = solve_triangular(model.chol, Kf, lower=True, check_finite=False)
    var = p.sigma_f ** 2 - np.einsum("ij,ij->j", V, V) + p.sigma_n ** 2
    return mean, np.maximum(var, 0.0)
