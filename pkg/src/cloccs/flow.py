"""Sampling model for DNA-content (flow cytometry) measurements.

Expected log2 fluorescence is piecewise linear in lifeline position: a
plateau at ``alpha1`` through G1 (and through the recovery/daughter phases
preceding it), a linear ramp across S phase, and a plateau at
``alpha1 + alpha2`` through G2/M, repeating every cycle.  A measured value
adds normal noise with per-sample scale ``tau``.  The density of a
measurement is then a convolution of the noise law with the (truncated)
normal cohort position law, which reduces to a closed form: Gaussian bumps
at the two plateaus scaled by the position mass they carry, plus one
Gaussian-product term per cycle for the S-phase ramp.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from ._normal import norm_interval_prob, norm_interval_prob_vec, norm_pdf
from .population import (
    CloccsParams,
    CohortIndex,
    ModelConfig,
    cohort_position_law,
    cohort_weights,
    enumerate_cohorts,
)

N_CHANNELS = 1024


@dataclass(frozen=True)
class FlowShared:
    """S-phase boundaries as cell-cycle fractions, shared across samples."""

    gamma1: float
    gamma2: float

    def __post_init__(self):
        if not 0.0 < self.gamma1 < self.gamma2 < 1.0:
            raise ValueError(f"need 0 < gamma1 < gamma2 < 1, got ({self.gamma1}, {self.gamma2})")


@dataclass(frozen=True)
class FlowPerTime:
    """Per-sample fluorescence parameters.

    alpha1
        G1 mode location, log2 fluorescence.
    alpha2
        G2/M increment over alpha1 (doubling of DNA content), log2 units.
    tau
        Measurement noise SD, log2 units.
    """

    alpha1: float
    alpha2: float
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.alpha2 > 0:
            raise ValueError(f"alpha2 must be positive, got {self.alpha2}")


@dataclass(frozen=True)
class FlowHyper:
    """Population-level means/variances of the per-sample parameters."""

    mu_tau: float
    s2_tau: float
    mu_a1: float
    s2_a1: float
    mu_a2: float
    s2_a2: float

    def __post_init__(self):
        for name in ("s2_tau", "s2_a1", "s2_a2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class FlowDataset:
    """Per-time fluorescence histograms over the 1024 instrument channels."""

    times: np.ndarray
    histograms: np.ndarray  # shape (n_times, 1024), nonnegative counts

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        hist = np.asarray(self.histograms, dtype=np.int64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "histograms", hist)
        if times.ndim != 1 or hist.ndim != 2 or hist.shape[0] != times.size:
            raise ValueError("need times (n,) and histograms (n, 1024)")
        if hist.shape[1] != N_CHANNELS:
            raise ValueError(f"histograms must have exactly {N_CHANNELS} channels, got {hist.shape[1]}")
        if times.size and np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(hist < 0):
            raise ValueError("channel counts must be nonnegative")
        if times.size and np.any(hist.sum(axis=1) < 1):
            raise ValueError("every retained time point needs at least one cell")

    def __len__(self) -> int:
        return int(self.times.size)

    def channel_values(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Distinct log2 channel values and their counts at time index ``i``."""
        counts = self.histograms[i]
        nz = np.nonzero(counts)[0]
        return np.log2(nz + 1.0), counts[nz].astype(float)

    def log2_values(self, i: int) -> np.ndarray:
        """Per-cell log2 values at time index ``i`` (channels expanded by count)."""
        f, counts = self.channel_values(i)
        return np.repeat(f, counts.astype(np.int64))

    def observed_density(self, i: int) -> np.ndarray:
        """Observed density on the log2 scale at every channel value.

        Normalizes channel counts and applies the change of variables from
        channel number k to f = log2(k): density(f_k) = p_k * k * ln 2.
        """
        counts = self.histograms[i].astype(float)
        p = counts / counts.sum()
        k = np.arange(1, N_CHANNELS + 1, dtype=float)
        return p * k * math.log(2.0)


def channel_grid() -> np.ndarray:
    """log2 values of the 1024 instrument channels."""
    return np.log2(np.arange(1, N_CHANNELS + 1, dtype=float))


def ramp_slope(shared: FlowShared, per_time: FlowPerTime, lam: float) -> float:
    """Slope of the S-phase fluorescence ramp per lifeline unit."""
    return per_time.alpha2 / (lam * (shared.gamma2 - shared.gamma1))


def ramp_intercept(shared: FlowShared, per_time: FlowPerTime, c: int) -> float:
    """Intercept of the S-phase ramp for cycle ``c``."""
    g1, g2 = shared.gamma1, shared.gamma2
    return (per_time.alpha1 * (g2 - g1) - per_time.alpha2 * (g1 + c)) / (g2 - g1)


def expected_fluorescence(
    shared: FlowShared,
    per_time: FlowPerTime,
    lam: float,
    p,
    config: ModelConfig,
) -> np.ndarray | float:
    """Expected log2 fluorescence of a cell at lifeline position ``p``.

    Positions below the first S-phase entry (including the recovery and
    daughter phases at negative positions) sit on the G1 plateau.  Positions
    beyond cycle ``config.C`` are clamped to the C-th cycle's pattern.
    """
    p_arr = np.asarray(p, dtype=float)
    cyc = np.clip(np.floor(p_arr / lam), 0, config.C)
    frac = p_arr / lam - cyc
    a1, a2 = per_time.alpha1, per_time.alpha2
    w1 = ramp_slope(shared, per_time, lam)
    ramp = w1 * p_arr + a1 - a2 * (shared.gamma1 + cyc) / (shared.gamma2 - shared.gamma1)
    out = np.where(
        frac < shared.gamma1,
        a1,
        np.where(frac < shared.gamma2, ramp, a1 + a2),
    )
    return out if out.ndim else float(out)


def _component_blocks(
    theta: CloccsParams,
    shared: FlowShared,
    per_time: FlowPerTime,
    c: CohortIndex,
    f: np.ndarray,
    t: float,
    config: ModelConfig,
):
    """The three pieces of the unnormalized closed-form component density."""
    law = cohort_position_law(theta, c, t)
    m, s = law.mean, law.sd
    lam = theta.lam
    g1, g2 = shared.gamma1, shared.gamma2
    a1, a2, tau = per_time.alpha1, per_time.alpha2, per_time.tau
    C = config.C

    def seg(a, b):
        lo = -math.inf if math.isinf(a) else (a - m) / s
        return norm_interval_prob(lo, (b - m) / s)

    # G1 plateau: everything from the left limit up to gamma1*lam, plus the
    # pre-S stretch of every later cycle.
    k_g1 = seg(law.left_limit, g1 * lam)
    for cyc in range(1, C + 1):
        k_g1 += seg(cyc * lam, (cyc + g1) * lam)

    # G2/M plateau: the post-S stretch of every cycle.
    k_g2 = 0.0
    for cyc in range(C + 1):
        k_g2 += seg((cyc + g2) * lam, (cyc + 1.0) * lam)

    g1_block = norm_pdf((f - a1) / tau) / tau * k_g1
    g2_block = norm_pdf((f - a1 - a2) / tau) / tau * k_g2

    # S ramp: one Gaussian-product term per cycle.  With noise variance v in
    # ramp-position units, the product of the noise law (as a function of
    # position) and the position law is a Gaussian in f times a posterior
    # normal over position, integrated between the S boundaries.
    w1 = ramp_slope(shared, per_time, lam)
    v = (tau / w1) ** 2
    s2 = s * s
    denom = s2 + v
    sd_marg = math.sqrt(denom)
    sd_post = math.sqrt(s2 * v / denom)
    s_block = np.zeros_like(f)
    for cyc in range(C + 1):
        x = (f - ramp_intercept(shared, per_time, cyc)) / w1
        amp = norm_pdf((x - m) / sd_marg) / math.sqrt(w1 * w1 * s2 + tau * tau)
        m_post = (s2 * x + v * m) / denom
        ds = norm_interval_prob_vec(((cyc + g1) * lam - m_post) / sd_post, ((cyc + g2) * lam - m_post) / sd_post)
        s_block = s_block + amp * ds

    return g1_block, g2_block, s_block, law


def flow_component_density(
    theta: CloccsParams,
    shared: FlowShared,
    per_time: FlowPerTime,
    c: CohortIndex,
    f,
    t: float,
    config: ModelConfig,
) -> np.ndarray | float:
    """Closed-form density of a log2 fluorescence value for one cohort.

    Equals the convolution of the noise law with the cohort's truncated
    normal position law, with the expected-fluorescence curve evaluated over
    cycles 0..C.
    """
    f_arr = np.atleast_1d(np.asarray(f, dtype=float))
    g1_block, g2_block, s_block, law = _component_blocks(theta, shared, per_time, c, f_arr, t, config)
    z = law.truncation_mass()
    if z == 0.0:
        out = np.zeros_like(f_arr)
    else:
        out = (g1_block + g2_block + s_block) / z
    return out if np.ndim(f) else float(out[0])


def flow_density(
    theta: CloccsParams,
    shared: FlowShared,
    per_time: FlowPerTime,
    f,
    t: float,
    config: ModelConfig,
) -> np.ndarray | float:
    """Marginal density of a log2 fluorescence value at time ``t``."""
    f_arr = np.atleast_1d(np.asarray(f, dtype=float))
    out = np.zeros_like(f_arr)
    for c, w in zip(enumerate_cohorts(config), cohort_weights(theta, config, t)):
        if w == 0.0:
            continue
        out += w * flow_component_density(theta, shared, per_time, c, f_arr, t, config)
    return out if np.ndim(f) else float(out[0])


def flow_log_likelihood(
    theta: CloccsParams,
    shared: FlowShared,
    per_time_list: list[FlowPerTime],
    data: FlowDataset,
    config: ModelConfig,
) -> float:
    """Log likelihood of a flow dataset; channel counts weight log densities.

    Measurements are conditionally independent within and between samples,
    so evaluating each distinct channel once and weighting by its count is
    identical to a per-cell sum.
    """
    if len(per_time_list) != len(data):
        raise ValueError("need one FlowPerTime per flow time point")
    ll = 0.0
    for i, (t, per_time) in enumerate(zip(data.times, per_time_list)):
        f, counts = data.channel_values(i)
        dens = flow_density(theta, shared, per_time, f, float(t), config)
        if np.any(dens <= 0.0):
            return -math.inf
        ll += float(np.dot(counts, np.log(dens)))
    return ll


def flow_density_quadrature(
    theta: CloccsParams,
    shared: FlowShared,
    per_time: FlowPerTime,
    f: float,
    t: float,
    config: ModelConfig,
    cohort: CohortIndex | None = None,
    abs_tol: float = 1e-10,
) -> float:
    """Adaptive-quadrature oracle for the convolution density.

    Integrates p(f | position) * p(position | cohort) over the position axis,
    piecewise between phase boundaries so every piece is smooth.  With
    ``cohort=None`` the cohort-weighted mixture is integrated.  Raises
    RuntimeError when the accumulated quadrature error estimate exceeds
    ``abs_tol``.
    """
    if cohort is None:
        weights = cohort_weights(theta, config, t)
        return float(
            sum(
                w * flow_density_quadrature(theta, shared, per_time, f, t, config, cohort=c, abs_tol=abs_tol)
                for c, w in zip(enumerate_cohorts(config), weights)
                if w > 0.0
            )
        )

    law = cohort_position_law(theta, cohort, t)
    m, s = law.mean, law.sd
    z = law.truncation_mass()
    if z == 0.0:
        return 0.0
    tau = per_time.tau
    lam = theta.lam

    def integrand(p):
        mu_f = expected_fluorescence(shared, per_time, lam, p, config)
        return norm_pdf((f - mu_f) / tau) / tau * norm_pdf((p - m) / s) / s / z

    # Positions beyond cycle C contribute nothing in the closed form (the
    # per-cycle sums stop), so the integration range is capped there.
    left = law.left_limit
    if math.isinf(left):
        left = m - 40.0 * s
    right = min((config.C + 1.0) * lam, m + 40.0 * s)
    if right <= left:
        return 0.0
    boundaries = [left]
    for cyc in range(config.C + 1):
        for x in (cyc * lam, (cyc + shared.gamma1) * lam, (cyc + shared.gamma2) * lam):
            if left < x < right:
                boundaries.append(x)
    boundaries.append(right)
    boundaries = sorted(set(boundaries))

    # Pure relative tolerance per segment: all segments are nonnegative, so
    # the summed estimate keeps relative accuracy even for tiny densities,
    # while the absolute tolerance is still met for O(1) ones.
    total = 0.0
    err_total = 0.0
    with warnings.catch_warnings():
        # Roundoff warnings on underflowing segments are expected; the
        # accumulated error estimate below is the convergence authority.
        warnings.simplefilter("ignore", IntegrationWarning)
        for a, b in zip(boundaries[:-1], boundaries[1:]):
            val, err = quad(integrand, a, b, epsabs=0.0, epsrel=1e-10, limit=200)
            total += val
            err_total += err
    if err_total > max(abs_tol, 1e-8 * abs(total)):
        raise RuntimeError(f"quadrature did not reach tolerance: error estimate {err_total:.3e}")
    return total
