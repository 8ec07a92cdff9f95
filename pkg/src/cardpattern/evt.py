"""Extreme-value probability of standardized amount deviations.

The EVP of a score is the Gumbel probability that it is the maximum of m
half-normal draws, averaged over the run length (time since the last
outlier) with a recursive run-length distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .core import CardPatternError, ZeroVariance

PRUNE_BELOW = 1e-16


class DegenerateCount(CardPatternError):
    pass


@dataclass(frozen=True)
class GumbelParams:
    mu_m: float
    sigma_m: float
    m: int


def gumbel_params(m: int) -> GumbelParams:
    if m <= 1:
        raise DegenerateCount(f"Gumbel parameters undefined for m={m}")
    r = math.sqrt(2.0 * math.log(m))
    mu = r - (math.log(math.log(m)) + math.log(2.0 * math.pi)) / (2.0 * r)
    return GumbelParams(mu, 1.0 / r, m)


def evp_given_runlength(z: float, params: GumbelParams) -> float:
    return math.exp(-math.exp(-(z - params.mu_m) / params.sigma_m))


def half_normal_cdf(z: float) -> float:
    """P(|N(0,1)| <= z); used for the single-sample (m = 1) term."""
    return float(erf(max(z, 0.0) / math.sqrt(2.0)))


def evp_conditional(z: float, m: int) -> float:
    if m == 1:
        return half_normal_cdf(z)
    return evp_given_runlength(z, gumbel_params(m))


def _conditional_vector(z, t):
    m = np.arange(2, t + 1, dtype=float)
    out = np.empty(t)
    out[0] = half_normal_cdf(z)
    if t > 1:
        r = np.sqrt(2.0 * np.log(m))
        mu = r - (np.log(np.log(m)) + math.log(2.0 * math.pi)) / (2.0 * r)
        with np.errstate(over="ignore"):
            out[1:] = np.exp(-np.exp(-(z - mu) * r))
    return out


@dataclass
class RunLengthState:
    """Run-length distribution before the step at time `t`.

    ``mass[k]`` is P(l_t = k + 1). Entries beyond the pruned tail are zero.
    """

    t: int = 1
    mass: np.ndarray = field(default_factory=lambda: np.array([1.0]))
    history: list = field(default_factory=list)
    prune_below: float = PRUNE_BELOW

    def copy(self) -> "RunLengthState":
        return RunLengthState(self.t, self.mass.copy(), list(self.history), self.prune_below)


def evp_step(state: RunLengthState, z_t: float):
    """Marginal EVP at the state's time and the advanced state.

    The input state is not modified.
    """
    mass = state.mass
    cond = _conditional_vector(float(z_t), len(mass))
    p = float(np.clip(cond @ mass, 0.0, 1.0))
    new = np.empty(len(mass) + 1)
    new[0] = p
    new[1:] = (1.0 - p) * mass
    if state.prune_below > 0:
        keep = len(new)
        while keep > 1 and new[keep - 1] < state.prune_below:
            keep -= 1
        new = new[:keep]
    new /= new.sum()
    return p, RunLengthState(state.t + 1, new, state.history + [p], state.prune_below)


def evp_stream(scores, prune_below: float = PRUNE_BELOW):
    """Sequential EVP for every score in `scores`."""
    state = RunLengthState(prune_below=prune_below)
    out = []
    for z in scores:
        p, state = evp_step(state, z)
        out.append(p)
    return np.array(out), state


def is_outlier(p_ev: float, theta_ev: float) -> bool:
    return p_ev > theta_ev


def standardize(y: float, mean: float, variance: float, side: str = "folded") -> float:
    """Deviation in standard units, folded to one side.

    ``side="upper"`` keeps only excess above the mean (deficits map to 0).
    """
    if not variance > 0:
        raise ZeroVariance("standardizing needs a positive variance")
    dev = (y - mean) / math.sqrt(variance)
    if side == "folded":
        return abs(dev)
    if side == "upper":
        return max(dev, 0.0)
    raise ValueError(f"unknown side {side!r}")
