"""Nelder-Mead downhill simplex minimisation.

Standard coefficients: reflection 1, expansion 2, contraction 1/2,
shrink 1/2. Non-finite objective values are treated as +inf so the simplex
simply moves away from infeasible probes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import CardPatternError


class NoProgress(CardPatternError):
    pass


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool
    history: list = field(default_factory=list)


def _safe(f, x):
    try:
        v = float(f(x))
    except (ArithmeticError, np.linalg.LinAlgError):
        return math.inf
    return v if math.isfinite(v) else math.inf


def nelder_mead(objective, initial, tolerance=1e-8, max_iter=1000, step=None,
                xtol=None) -> SimplexResult:
    """Minimise `objective` starting from `initial`.

    Stops when the spread of objective values over the simplex falls below
    `tolerance` (and, if given, the simplex diameter below `xtol`) or after
    `max_iter` iterations. ``history[k]`` is the best value after iteration k.
    """
    x0 = np.atleast_1d(np.asarray(initial, dtype=float))
    n = x0.size
    if step is None:
        step = np.where(x0 != 0, 0.05 * np.abs(x0), 0.00025)
    step = np.broadcast_to(np.asarray(step, dtype=float), (n,))

    pts = np.empty((n + 1, n))
    pts[0] = x0
    for i in range(n):
        pts[i + 1] = x0
        pts[i + 1, i] += step[i] if step[i] != 0 else 0.00025
    vals = np.array([_safe(objective, p) for p in pts])
    nfev = n + 1
    if not np.isfinite(vals).any():
        raise NoProgress("objective is not finite at any initial probe")

    history = []
    converged = False
    it = 0
    while it < max_iter:
        order = np.argsort(vals, kind="stable")
        pts, vals = pts[order], vals[order]
        spread = vals[-1] - vals[0]
        if math.isfinite(spread) and spread <= tolerance:
            if xtol is None or np.max(np.abs(pts[1:] - pts[0])) <= xtol:
                converged = True
                break
        it += 1

        centroid = pts[:-1].mean(axis=0)
        worst = pts[-1]
        xr = centroid + (centroid - worst)
        fr = _safe(objective, xr)
        nfev += 1
        if fr < vals[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = _safe(objective, xe)
            nfev += 1
            if fe < fr:
                pts[-1], vals[-1] = xe, fe
            else:
                pts[-1], vals[-1] = xr, fr
        elif fr < vals[-2]:
            pts[-1], vals[-1] = xr, fr
        else:
            if fr < vals[-1]:
                xc = centroid + 0.5 * (xr - centroid)
                fc = _safe(objective, xc)
                nfev += 1
                accept = fc <= fr
            else:
                xc = centroid + 0.5 * (worst - centroid)
                fc = _safe(objective, xc)
                nfev += 1
                accept = fc < vals[-1]
            if accept:
                pts[-1], vals[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    pts[i] = pts[0] + 0.5 * (pts[i] - pts[0])
                    vals[i] = _safe(objective, pts[i])
                nfev += n
        history.append(float(vals.min()))

    if not np.isfinite(vals).any():
        raise NoProgress("objective stayed infinite over the whole search")
    best = int(np.argmin(vals))
    return SimplexResult(pts[best].copy(), float(vals[best]), it, nfev, converged, history)
