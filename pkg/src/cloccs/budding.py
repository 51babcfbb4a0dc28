"""Sampling model for budded-cell counts.

A cell carries a visible bud while its lifeline position sits in the budded
stretch of some cycle, ``((c + beta)*lam, (c + 1)*lam]``.  The probability
that a sampled cell is budded marginalizes the per-cohort interval
probabilities over the cohort weights, and budded counts are per-cell
Bernoulli draws, independent across sampling times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._normal import norm_interval_prob_vec
from .population import CloccsParams, CohortIndex, ModelConfig, cohort_position_law, cohort_weights, enumerate_cohorts

# Guard against log(0) from Phi tail underflow; small enough not to bias fits.
PROB_EPS = 1e-12


@dataclass(frozen=True)
class BuddingParams:
    """Bud-emergence point as a fraction of the cell cycle, in (0, 1)."""

    beta: float

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")


@dataclass(frozen=True)
class BuddingDataset:
    """Budded/total counts per sampling time.

    times are strictly increasing minutes; ``0 <= budded[i] <= total[i]`` and
    every ``total[i] >= 1``.
    """

    times: np.ndarray
    budded: np.ndarray
    total: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        budded = np.asarray(self.budded, dtype=np.int64)
        total = np.asarray(self.total, dtype=np.int64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "budded", budded)
        object.__setattr__(self, "total", total)
        if not (times.shape == budded.shape == total.shape) or times.ndim != 1:
            raise ValueError("times, budded, total must be 1-d arrays of equal length")
        if times.size and np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(total < 1):
            raise ValueError("every total count must be >= 1")
        if np.any(budded < 0) or np.any(budded > total):
            raise ValueError("budded counts must satisfy 0 <= budded <= total")

    def __len__(self) -> int:
        return int(self.times.size)

    def observed_fraction(self) -> np.ndarray:
        return self.budded / self.total


def _interval_mass_sum(mean: float, sd: float, lam: float, beta: float, C: int) -> float:
    """Sum over cycles of the normal mass in ((c+beta)*lam, (c+1)*lam]."""
    c = np.arange(C + 1)
    if sd == 0.0:
        upper = (lam * (c + 1.0) - mean >= 0).astype(float)
        lower = (lam * (c + beta) - mean >= 0).astype(float)
        return float(np.sum(upper - lower))
    lo = (lam * (c + beta) - mean) / sd
    hi = (lam * (c + 1.0) - mean) / sd
    return float(np.sum(norm_interval_prob_vec(lo, hi)))


def budded_prob_given_cohort(
    theta: CloccsParams,
    beta: float,
    c: CohortIndex,
    t: float,
    config: ModelConfig,
) -> float:
    """Probability a cell of cohort ``c`` is budded at time ``t``."""
    law = cohort_position_law(theta, c, t)
    raw = _interval_mass_sum(law.mean, law.sd, theta.lam, beta, config.C)
    z = law.truncation_mass()
    if z == 0.0:
        return 0.0
    p = raw / z
    # Clip arithmetic rounding just outside [0, 1].
    return min(max(p, 0.0), 1.0)


def budded_prob(theta: CloccsParams, beta: float, t: float, config: ModelConfig) -> float:
    """Marginal probability that a cell sampled at time ``t`` is budded."""
    weights = cohort_weights(theta, config, t)
    total = 0.0
    for c, w in zip(enumerate_cohorts(config), weights):
        if w == 0.0:
            continue
        total += w * budded_prob_given_cohort(theta, beta, c, t, config)
    return min(max(total, 0.0), 1.0)


def fitted_budding_curve(
    theta: CloccsParams,
    beta: float,
    t_grid,
    config: ModelConfig,
) -> np.ndarray:
    """``budded_prob`` evaluated on a time grid."""
    return np.array([budded_prob(theta, beta, float(t), config) for t in np.asarray(t_grid, dtype=float)])


def budding_log_likelihood(
    theta: CloccsParams,
    beta: float,
    data: BuddingDataset,
    config: ModelConfig,
) -> float:
    """Per-cell Bernoulli log likelihood of a budding dataset.

    No binomial coefficient is included: the counts stand in for individual
    cell observations, and the omitted coefficient is constant in the
    parameters.  It must be kept consistent across models compared by
    marginal likelihood, as it is throughout this package.
    """
    ll = 0.0
    for t, b, n in zip(data.times, data.budded, data.total):
        p = budded_prob(theta, beta, float(t), config)
        p = min(max(p, PROB_EPS), 1.0 - PROB_EPS)
        ll += b * math.log(p) + (n - b) * math.log1p(-p)
    return ll
