"""Closed-form population model for cell-synchrony experiments.

A population released from synchrony is tracked on a common "lifeline": an
unbounded cell-cycle axis on which an average cell advances one unit per
minute and each full cycle spans ``lambda`` units.  At any time the
population decomposes into cohorts indexed by ``{g, r}`` where ``g`` counts
daughter stages in the lineage and ``r`` the wave of division that created
the cohort.  Each cohort's position is normal (truncated at the start of the
daughter growth phase for ``g >= 1``) with a mean set back by ``g`` daughter
offsets and ``r`` cycle lengths, and the population density is the
mass-weighted mixture over cohorts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._normal import norm_cdf, norm_pdf, norm_sf


class CohortIndex(NamedTuple):
    """Cohort label: generation ``g`` and reproductive instance ``r``."""

    g: int
    r: int


@dataclass(frozen=True)
class CloccsParams:
    """Population-dynamics parameters.

    mu0
        Mean length of the post-release recovery period, minutes.  The
        founder cohort's starting position is centered at ``-mu0``.
    sigma0_sq
        Variance of the starting position, minutes^2.
    sigmav_sq
        Variance of the per-cell velocity, (lifeline units / min)^2.  Mean
        velocity is 1 by construction.
    lam
        Cell-cycle length, minutes (lifeline units per cycle).
    delta
        Daughter-specific growth offset, minutes.
    """

    mu0: float
    sigma0_sq: float
    sigmav_sq: float
    lam: float
    delta: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not self.sigma0_sq > 0:
            raise ValueError(f"sigma0_sq must be positive, got {self.sigma0_sq}")
        if self.sigmav_sq < 0:
            raise ValueError(f"sigmav_sq must be >= 0, got {self.sigmav_sq}")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.mu0 < 0:
            raise ValueError(f"mu0 must be >= 0, got {self.mu0}")

    def position_sd(self, t: float) -> float:
        """Standard deviation of any cohort's position at time ``t``."""
        return math.sqrt(self.sigma0_sq + t * t * self.sigmav_sq)

    def negative_velocity_prob(self) -> float:
        """P(V < 0) under the velocity law N(1, sigmav_sq).

        The normal velocity model technically allows negative velocities;
        this diagnostic lets users confirm the mass is negligible (it is
        ~1e-300 at typical fitted values).
        """
        if self.sigmav_sq == 0.0:
            return 0.0
        return norm_cdf(-1.0 / math.sqrt(self.sigmav_sq))


@dataclass(frozen=True)
class ModelConfig:
    """Truncation limits of the cohort and per-cycle sums.

    R
        Maximum reproductive instance tracked.  Synchrony experiments rarely
        run past two or three cycles, so 4-6 suffices in practice.
    C
        Number of cell cycles covered by per-cycle sums (budded intervals,
        DNA-content plateaus).  Must be at least ``R``.
    """

    R: int = 6
    C: int = 8

    def __post_init__(self):
        if self.R < 1:
            raise ValueError(f"R must be >= 1, got {self.R}")
        if self.C < self.R:
            raise ValueError(f"C must be >= R, got C={self.C}, R={self.R}")


@dataclass(frozen=True)
class CohortPositionLaw:
    """Normal law of one cohort's lifeline position, truncated at ``left_limit``."""

    mean: float
    sd: float
    left_limit: float

    def truncation_mass(self) -> float:
        """Mass of the untruncated normal above ``left_limit``."""
        if math.isinf(self.left_limit):
            return 1.0
        return norm_sf((self.left_limit - self.mean) / self.sd)


def enumerate_cohorts(config: ModelConfig) -> list[CohortIndex]:
    """All cohorts present with R waves of division, in (r, g) order.

    The founder cohort {0,0} comes first, then {g,r} for 0 < g <= r <= R
    with r ascending and g ascending within r.
    """
    cohorts = [CohortIndex(0, 0)]
    for r in range(1, config.R + 1):
        for g in range(1, r + 1):
            cohorts.append(CohortIndex(g, r))
    return cohorts


def lineage_multiplicity(c: CohortIndex) -> int:
    """Number of distinct lineage paths feeding cohort ``c``.

    A member of {g,r} descends through g divisions whose waves sum to r,
    i.e. one composition of r into g positive parts: C(r-1, g-1) paths.
    """
    g, r = c
    if g == 0 and r == 0:
        return 1
    if not (0 < g <= r):
        raise ValueError(f"invalid cohort index {{g={g}, r={r}}}")
    return math.comb(r - 1, g - 1)


def cohort_position_law(theta: CloccsParams, c: CohortIndex, t: float) -> CohortPositionLaw:
    """Position law of cohort ``c`` at time ``t`` (before weighting)."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    g, r = c
    mean = -theta.mu0 + t - g * theta.delta - r * theta.lam
    sd = theta.position_sd(t)
    left = -math.inf if (g == 0 and r == 0) else -theta.delta
    return CohortPositionLaw(mean=mean, sd=sd, left_limit=left)


def cohort_mass(theta: CloccsParams, c: CohortIndex, t: float) -> float:
    """Expected per-founder count of cohort ``c`` members at time ``t``.

    The founder cohort has mass 1; cohort {g,r} with g >= 1 has mass equal
    to the probability that a founder-lineage position has passed
    ``r*lam + (g-1)*delta``, once per contributing lineage path.
    """
    g, r = c
    if g == 0 and r == 0:
        return 1.0
    if not (0 < g <= r):
        return 0.0
    sd = theta.position_sd(t)
    num = theta.mu0 - t + r * theta.lam + (g - 1) * theta.delta
    if sd == 0.0:
        passed = 1.0 if num < 0 else (0.5 if num == 0 else 0.0)
    else:
        passed = norm_sf(num / sd)
    return passed * math.comb(r - 1, g - 1)


def population_mass(theta: CloccsParams, config: ModelConfig, t: float) -> float:
    """Total cohort mass: expected population size relative to founders."""
    return sum(cohort_mass(theta, c, t) for c in enumerate_cohorts(config))


def cohort_weight(theta: CloccsParams, config: ModelConfig, c: CohortIndex, t: float) -> float:
    """Probability that a cell sampled at time ``t`` belongs to cohort ``c``."""
    return cohort_mass(theta, c, t) / population_mass(theta, config, t)


def cohort_weights(theta: CloccsParams, config: ModelConfig, t: float) -> np.ndarray:
    """All cohort weights at time ``t``, ordered as ``enumerate_cohorts``."""
    masses = np.array([cohort_mass(theta, c, t) for c in enumerate_cohorts(config)])
    return masses / masses.sum()


def position_density(theta: CloccsParams, config: ModelConfig, t: float, p) -> np.ndarray | float:
    """Mixture density of lifeline position at time ``t``.

    Accepts scalar or array ``p``; the result has the same shape.  Each
    cohort contributes a (truncated) normal component weighted by its share
    of the population mass.
    """
    p_arr = np.asarray(p, dtype=float)
    out = np.zeros_like(p_arr)
    sd = theta.position_sd(t)
    if sd == 0.0:
        raise ValueError("position density is degenerate (sd = 0); need sigma0_sq > 0 or t > 0 with sigmav_sq > 0")
    for c, w in zip(enumerate_cohorts(config), cohort_weights(theta, config, t)):
        if w == 0.0:
            continue
        law = cohort_position_law(theta, c, t)
        z = law.truncation_mass()
        if z == 0.0:
            continue
        comp = norm_pdf((p_arr - law.mean) / sd) / sd / z
        if not math.isinf(law.left_limit):
            comp = np.where(p_arr >= law.left_limit, comp, 0.0)
        out += w * comp
    return out if out.ndim else float(out)


def position_cdf(theta: CloccsParams, config: ModelConfig, t: float, p) -> np.ndarray | float:
    """CDF companion of :func:`position_density` (handy for KS checks)."""
    p_arr = np.asarray(p, dtype=float)
    out = np.zeros_like(p_arr)
    sd = theta.position_sd(t)
    if sd == 0.0:
        raise ValueError("position distribution is degenerate (sd = 0)")
    for c, w in zip(enumerate_cohorts(config), cohort_weights(theta, config, t)):
        if w == 0.0:
            continue
        law = cohort_position_law(theta, c, t)
        z = law.truncation_mass()
        if z == 0.0:
            continue
        comp = norm_cdf((p_arr - law.mean) / sd)
        if not math.isinf(law.left_limit):
            base = norm_cdf((law.left_limit - law.mean) / sd)
            comp = np.where(p_arr >= law.left_limit, (comp - base) / z, 0.0)
        out += w * comp
    return out if out.ndim else float(out)
