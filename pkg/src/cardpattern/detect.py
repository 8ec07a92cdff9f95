"""Scoring pipeline, the two-threshold classification rule and the sweep."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from . import ar, gp, mobility
from .core import (CardPatternError, ConfidencePoint, Label, ModelConfig, ZeroVariance,
                   log_transform)
from .evt import RunLengthState, evp_step, is_outlier, standardize

log = logging.getLogger(__name__)

AMOUNT_MODELS = ("gp", "ar")
REGION_MODELS = ("assoc", "adj")
METHOD_NAMES = {("assoc", "gp"): "Method 1", ("assoc", "ar"): "Method 2",
                ("adj", "gp"): "Method 3", ("adj", "ar"): "Method 4"}


@dataclass(frozen=True)
class ScoredTransaction:
    dataset_id: int
    kind: Label
    pos: int
    point: Optional[ConfidencePoint]
    evp: Optional[float]
    amount_model: str
    region_model: str
    truth: Label
    mean: float = float("nan")
    variance: float = float("nan")
    error: str = ""

    @property
    def scored(self) -> bool:
        return self.point is not None


def amount_confidence(mean: float, variance: float, y: float) -> float:
    """100 * (1 - Phi((y - E) / sqrt(V)))."""
    if not variance > 0:
        raise ZeroVariance("amount confidence needs a positive variance")
    return 100.0 * float(ndtr(-(y - mean) / math.sqrt(variance)))


def classify(point: ConfidencePoint, theta: float) -> Label:
    if point.x < theta and point.y < theta:
        return Label.FRAUDULENT
    return Label.LEGITIMATE


# -- amount predictions --------------------------------------------------------

class FitCache:
    """Memoises amount-model fits by (model, data, relevant config).

    Fits are pure functions of these keys, so sharing them across datasets
    (the F datasets share their training data) cannot change results.
    """

    def __init__(self):
        self._store = {}
        self.hits = 0
        self.misses = 0

    def get(self, key, build):
        if key in self._store:
            self.hits += 1
            return self._store[key]
        self.misses += 1
        value = build()
        self._store[key] = value
        return value


def _ar_key(series, config):
    return ("ar", np.asarray(series, dtype=float).tobytes(), config.p, config.d, config.window,
            config.lag_padding)


def _gp_key(series, config):
    return ("gp", np.asarray(series, dtype=float).tobytes(), config.window, config.center,
            config.gp_restarts, config.seed)


def fit_amount_model(kind: str, series, config: ModelConfig, cache: Optional[FitCache] = None):
    cache = cache or FitCache()
    if kind == "ar":
        return cache.get(_ar_key(series, config), lambda: ar.fit_ar(
            series, config.p, config.window, config.d, config.lag_padding))
    if kind == "gp":
        return cache.get(_gp_key(series, config), lambda: gp.fit_gp(
            series, config.gp_restarts, config.seed, config.center, config.window))
    raise ValueError(f"unknown amount model {kind!r}")


def predict_amount(kind: str, model, history, steps_ahead: int, config: ModelConfig):
    """(mean, variance) of the value `steps_ahead` after the fit's last point.

    AR models always predict one step from the actual `history`; GP models
    predict at index N_fit + steps_ahead.
    """
    if kind == "ar":
        pred = ar.forecast_level(model, history, config.sd_multiplier)
        return pred.mean, pred.variance
    pred = gp.predict_gp(model, len(model.inputs) + steps_ahead, config.sd_multiplier)
    return pred.mean, pred.variance


def insample_moments(kind: str, model, train_logs, config: ModelConfig):
    """In-sample (index, mean, variance) for the training portion."""
    train_logs = np.asarray(train_logs, dtype=float)
    if kind == "ar":
        used = train_logs if config.window is None else train_logs[-config.window:]
        fitted, target = ar.fitted_values(model, used, config.lag_padding)
        resid = target - fitted
        k = len(resid)
        idx = np.arange(len(train_logs) - k, len(train_logs))
        mean = train_logs[idx] - resid
        return idx, mean, np.full(k, model.noise_variance)
    mean, var = gp.smooth_gp(model)
    k = len(mean)
    return np.arange(len(train_logs) - k, len(train_logs)), mean, var


@dataclass
class AmountTrack:
    """Per-index moments and EVP for one sequence under one amount model."""

    index: np.ndarray  # 0-based positions in the full sequence
    y: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    evp: np.ndarray
    errors: dict = field(default_factory=dict)


def amount_track(kind: str, logs, train_len: int, config: ModelConfig,
                 cache: Optional[FitCache] = None) -> AmountTrack:
    """Moments and the sequential EVP over the whole sequence.

    Training positions use the in-sample fit on the training portion; each
    test position uses a fit on everything before it (``refit="step"``) or
    the training fit (``refit="once"``). Positions whose model fails carry
    NaN and an entry in `errors`.
    """
    cache = cache or FitCache()
    logs = np.asarray(logs, dtype=float)
    n = len(logs)
    mean = np.full(n, np.nan)
    var = np.full(n, np.nan)
    errors = {}
    base = None
    try:
        base = fit_amount_model(kind, logs[:train_len], config, cache)
        idx, m, v = insample_moments(kind, base, logs[:train_len], config)
        mean[idx], var[idx] = m, v
    except CardPatternError as exc:
        for i in range(train_len):
            errors[i] = str(exc)
    for i in range(train_len, n):
        try:
            if config.refit == "step":
                model = fit_amount_model(kind, logs[:i], config, cache)
                ahead = 1
            else:
                if base is None:
                    raise CardPatternError(errors.get(0, "training fit failed"))
                model, ahead = base, i - train_len + 1
            mean[i], var[i] = predict_amount(kind, model, logs[:i], ahead, config)
        except CardPatternError as exc:
            errors[i] = f"{type(exc).__name__}: {exc}"

    evp = np.full(n, np.nan)
    state = RunLengthState()
    for i in range(n):
        if not np.isfinite(mean[i]):
            continue
        try:
            z = standardize(logs[i], mean[i], var[i], config.evp_side)
        except ZeroVariance as exc:
            errors.setdefault(i, f"ZeroVariance: {exc}")
            continue
        evp[i], state = evp_step(state, z)
    return AmountTrack(np.arange(n), logs, mean, var, evp, errors)


# -- region confidences --------------------------------------------------------

def region_confidences(regions: Sequence[int], train_len: int, region_model: str,
                       row_len: int = 10) -> list:
    """Region confidence of each test position given the path before it."""
    regions = [int(r) for r in regions]
    out = []
    for i in range(train_len, len(regions)):
        history = regions[:i]
        prev1 = history[-1] if history else None
        prev2 = history[-2] if len(history) >= 2 else None
        if not history:
            out.append(0.0)
            continue
        matrix = mobility.build_path_matrix(history, row_len)
        if region_model == "assoc":
            out.append(mobility.region_confidence_assoc(matrix, prev2, prev1, regions[i]))
        elif region_model == "adj":
            out.append(mobility.region_confidence_adj(mobility.build_adjacency(matrix), prev1, regions[i]))
        else:
            raise ValueError(f"unknown region model {region_model!r}")
    return out


# -- scoring -------------------------------------------------------------------

def score_dataset(dataset, amount_models=AMOUNT_MODELS, region_models=("assoc",),
                  config: ModelConfig = ModelConfig(), cache: Optional[FitCache] = None) -> dict:
    """Score every test transaction under each (region, amount) combination.

    Returns ``{(region_model, amount_model): [ScoredTransaction, ...]}``.
    """
    cache = cache or FitCache()
    seq = dataset.sequence
    logs = log_transform(seq)
    train_len = dataset.train_len
    xs = {rm: region_confidences(seq.regions, train_len, rm, config.row_len) for rm in region_models}
    out = {}
    for am in amount_models:
        track = amount_track(am, logs, train_len, config, cache)
        for rm in region_models:
            rows = []
            for j, i in enumerate(range(train_len, len(logs)), start=1):
                common = dict(dataset_id=dataset.dataset_id, kind=dataset.kind, pos=j,
                              amount_model=am, region_model=rm, truth=dataset.kind,
                              mean=float(track.mean[i]), variance=float(track.variance[i]))
                err = track.errors.get(i)
                if err is None and not np.isfinite(track.evp[i]):
                    err = "no extreme-value probability"
                if err is None:
                    try:
                        y = amount_confidence(track.mean[i], track.variance[i], logs[i])
                        point = ConfidencePoint(xs[rm][j - 1], y)
                    except CardPatternError as exc:
                        err = f"{type(exc).__name__}: {exc}"
                if err is not None:
                    rows.append(ScoredTransaction(point=None, evp=None, error=err, **common))
                else:
                    rows.append(ScoredTransaction(point=point, evp=float(track.evp[i]), **common))
            out[(rm, am)] = rows
    return out


def score_sequence(dataset, amount_model: str, region_model: str,
                   config: ModelConfig = ModelConfig(), cache: Optional[FitCache] = None) -> list:
    return score_dataset(dataset, (amount_model,), (region_model,), config, cache)[(region_model, amount_model)]


# -- sweep ---------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    theta: float
    accuracy: int
    false_positive: int
    false_negative: int
    total: int
    n_legit: int
    n_fraud: int

    @property
    def accuracy_rate(self) -> float:
        return self.accuracy / self.total if self.total else 0.0

    # every rate is a share of all scored points, as in the report table
    @property
    def fp_rate(self) -> float:
        return self.false_positive / self.total if self.total else 0.0

    @property
    def fn_rate(self) -> float:
        return self.false_negative / self.total if self.total else 0.0


@dataclass(frozen=True)
class SweepReport:
    rows: tuple
    unscored: int = 0

    @property
    def best(self) -> SweepRow:
        """Highest accuracy; ties prefer balanced errors, then smaller theta."""
        return min(self.rows, key=lambda r: (-r.accuracy, abs(r.false_positive - r.false_negative), r.theta))

    def row(self, theta: float) -> SweepRow:
        for r in self.rows:
            if r.theta == theta:
                return r
        raise KeyError(theta)


def sweep(scored: Sequence[ScoredTransaction], thetas=(10, 20, 30, 40, 50)) -> SweepReport:
    """Accuracy, false positives and false negatives per threshold.

    Unscored transactions are left out of every count and reported apart.
    """
    if not scored:
        raise ValueError("nothing to sweep")
    pts = [s for s in scored if s.scored]
    unscored = len(scored) - len(pts)
    n_l = sum(1 for s in pts if s.truth is Label.LEGITIMATE)
    n_f = len(pts) - n_l
    rows = []
    for theta in thetas:
        fp = fn = 0
        for s in pts:
            verdict = classify(s.point, theta)
            if s.truth is Label.LEGITIMATE and verdict is Label.FRAUDULENT:
                fp += 1
            elif s.truth is Label.FRAUDULENT and verdict is Label.LEGITIMATE:
                fn += 1
        rows.append(SweepRow(float(theta), len(pts) - fp - fn, fp, fn, len(pts), n_l, n_f))
    return SweepReport(tuple(rows), unscored)


# -- outlier scans -------------------------------------------------------------

@dataclass(frozen=True)
class ScanPoint:
    index: int  # 1-based
    y: float
    mean: float
    variance: float
    upper: float
    evp: float
    flagged: bool
    test: bool


def outlier_scan(dataset, amount_model: str, mode: str = "SD", config: ModelConfig = ModelConfig(),
                 cache: Optional[FitCache] = None) -> list:
    """Flag amount outliers over the whole sequence.

    ``SD`` flags y > E + k sqrt(V) with k = `config.sd_multiplier`; ``EVP``
    flags sequential extreme-value probabilities above `config.theta_ev`.
    Positions without a usable model are returned unflagged with NaN moments.
    """
    mode = mode.upper()
    if mode not in ("SD", "EVP"):
        raise ValueError(f"unknown scan mode {mode!r}")
    seq = dataset.sequence
    logs = log_transform(seq)
    track = amount_track(amount_model, logs, dataset.train_len, config, cache)
    out = []
    for i in range(len(logs)):
        m, v, e = track.mean[i], track.variance[i], track.evp[i]
        upper = m + config.sd_multiplier * math.sqrt(v) if np.isfinite(v) else float("nan")
        if mode == "SD":
            flag = bool(np.isfinite(upper) and logs[i] > upper)
        else:
            flag = bool(np.isfinite(e) and is_outlier(e, config.theta_ev))
        out.append(ScanPoint(i + 1, float(logs[i]), float(m), float(v), float(upper), float(e), flag,
                             i >= dataset.train_len))
    return out
