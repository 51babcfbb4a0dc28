"""Numerically safe scalar/array normal-distribution helpers."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc, ndtr

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def norm_cdf(x):
    """Standard normal CDF."""
    return ndtr(x)


def norm_sf(x):
    """Upper tail 1 - Phi(x), computed without cancellation for large x."""
    return 0.5 * erfc(x / _SQRT2)


def norm_pdf(x):
    """Standard normal density."""
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def norm_logpdf(x, mean=0.0, sd=1.0):
    """Log density of N(mean, sd^2)."""
    z = (np.asarray(x, dtype=float) - mean) / sd
    return -0.5 * z * z - math.log(sd) - _LOG_SQRT_2PI


def norm_interval_prob(lo: float, hi: float) -> float:
    """P(lo < Z <= hi) for standard normal Z, without tail cancellation.

    Intervals in the upper half-line are computed from survival functions so
    that probabilities far below machine epsilon keep full relative accuracy.
    """
    if hi <= lo:
        return 0.0
    if math.isinf(lo) and lo < 0:
        return float(ndtr(hi))
    if math.isinf(hi) and hi > 0:
        return float(norm_sf(lo))
    if lo + hi > 0:
        return float(norm_sf(lo) - norm_sf(hi))
    return float(ndtr(hi) - ndtr(lo))


def norm_interval_prob_vec(lo, hi):
    """Vectorized :func:`norm_interval_prob` for finite z-score arrays."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    upper = lo + hi > 0
    out = np.where(upper, norm_sf(lo) - norm_sf(hi), ndtr(hi) - ndtr(lo))
    return np.where(hi <= lo, 0.0, out)
