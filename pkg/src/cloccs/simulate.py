"""Forward Monte Carlo simulator of the branching population.

Cells live on individual lifelines.  Founders start at ``P0 ~ N(-mu0,
sigma0_sq)`` with velocity ``V ~ N(1, sigmav_sq)`` and move linearly; every
crossing of a multiple of ``lam`` on a cell's own lifeline spawns a daughter
that starts at ``-delta`` on a fresh lifeline and inherits the mother's
velocity.  Because positions are linear in time, division times are solved
exactly rather than detected on a grid.  Birth times may be negative: a
founder drawn beyond a division point has, by convention of the closed-form
model, already divided.

This simulator is the package's independent oracle: cohort proportions,
budded fractions, fluorescence histograms, and population growth from large
simulations are compared against the closed-form expressions in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .budding import BuddingDataset
from .flow import N_CHANNELS, FlowDataset, FlowPerTime, FlowShared, expected_fluorescence
from .population import CloccsParams, CohortIndex, ModelConfig


@dataclass(frozen=True)
class SimCell:
    """One simulated cell: cohort tag, motion parameters, and birth time."""

    cohort: CohortIndex
    velocity: float
    start_offset: float
    birth_time: float

    def position(self, t: float) -> float:
        return self.start_offset + self.velocity * (t - self.birth_time)


class Population:
    """Array-backed simulated population with per-time snapshot views."""

    def __init__(self, g, r, velocity, start, birth, founder):
        self.g = np.asarray(g, dtype=np.int16)
        self.r = np.asarray(r, dtype=np.int16)
        self.velocity = np.asarray(velocity, dtype=float)
        self.start = np.asarray(start, dtype=float)
        self.birth = np.asarray(birth, dtype=float)
        self.founder = np.asarray(founder, dtype=np.int64)
        self.n_founders = int((self.g == 0).sum())

    def __len__(self) -> int:
        return int(self.g.size)

    def snapshot(self, t: float):
        """(g, r, positions, founder) arrays for cells born by time ``t``."""
        alive = self.birth <= t
        pos = self.start[alive] + self.velocity[alive] * (t - self.birth[alive])
        return self.g[alive], self.r[alive], pos, self.founder[alive]

    def size_at(self, t: float) -> int:
        return int((self.birth <= t).sum())

    def cells(self) -> list[SimCell]:
        """Materialize SimCell records (meant for small populations)."""
        return [
            SimCell(
                cohort=CohortIndex(int(g), int(r)),
                velocity=float(v),
                start_offset=float(s),
                birth_time=float(b),
            )
            for g, r, v, s, b in zip(self.g, self.r, self.velocity, self.start, self.birth)
        ]


def simulate_lineage_population(
    theta: CloccsParams,
    config: ModelConfig,
    t_grid,
    n_founders: int,
    rng: np.random.Generator,
) -> Population:
    """Simulate the branching population out to ``max(t_grid)``.

    Division recursion is capped at reproductive instance ``config.R``.
    Cells with nonpositive velocity never divide.
    """
    if n_founders < 1:
        raise ValueError("n_founders must be >= 1")
    t_grid = np.asarray(t_grid, dtype=float)
    t_max = float(t_grid.max()) if t_grid.size else 0.0

    p0 = rng.normal(-theta.mu0, math.sqrt(theta.sigma0_sq), size=n_founders)
    v = rng.normal(1.0, math.sqrt(theta.sigmav_sq), size=n_founders)

    g_parts = [np.zeros(n_founders, dtype=np.int16)]
    r_parts = [np.zeros(n_founders, dtype=np.int16)]
    v_parts = [v]
    start_parts = [p0]
    birth_parts = [np.zeros(n_founders)]
    founder_parts = [np.arange(n_founders, dtype=np.int64)]

    # Breadth-first over generations: each frontier cell emits one child per
    # lifeline cycle boundary it crosses before t_max, subject to the R cap.
    fr_g = g_parts[0]
    fr_r = r_parts[0]
    fr_v = v_parts[0]
    fr_start = start_parts[0]
    fr_birth = birth_parts[0]
    fr_founder = founder_parts[0]
    while fr_g.size:
        can_divide = (fr_v > 0) & (fr_r < config.R)
        if not can_divide.any():
            break
        g0 = fr_g[can_divide]
        r0 = fr_r[can_divide]
        v0 = fr_v[can_divide]
        s0 = fr_start[can_divide]
        b0 = fr_birth[can_divide]
        f0 = fr_founder[can_divide]
        # Number of children each parent produces by t_max: crossings of
        # k*lam with k = 1..(R - r_parent) before the horizon.
        k_reach = np.floor((s0 + v0 * (t_max - b0)) / theta.lam).astype(np.int64)
        k_max = np.minimum(np.maximum(k_reach, 0), (config.R - r0).astype(np.int64))
        total = int(k_max.sum())
        if total == 0:
            break
        parent = np.repeat(np.arange(k_max.size), k_max)
        # k = 1..k_max per parent, built from a global cumulative ramp.
        stops = np.cumsum(k_max)
        k = np.arange(1, total + 1) - np.repeat(stops - k_max, k_max)
        birth = b0[parent] + (k * theta.lam - s0[parent]) / v0[parent]
        child_g = (g0[parent] + 1).astype(np.int16)
        child_r = (r0[parent] + k).astype(np.int16)
        child_v = v0[parent]
        child_start = np.full(total, -theta.delta)
        child_founder = f0[parent]

        g_parts.append(child_g)
        r_parts.append(child_r)
        v_parts.append(child_v)
        start_parts.append(child_start)
        birth_parts.append(birth)
        founder_parts.append(child_founder)

        fr_g, fr_r, fr_v = child_g, child_r, child_v
        fr_start, fr_birth, fr_founder = child_start, birth, child_founder

    return Population(
        np.concatenate(g_parts),
        np.concatenate(r_parts),
        np.concatenate(v_parts),
        np.concatenate(start_parts),
        np.concatenate(birth_parts),
        np.concatenate(founder_parts),
    )


def is_budded(positions: np.ndarray, lam: float, beta: float) -> np.ndarray:
    """Budded iff the within-cycle phase fraction lies in (beta, 1]."""
    pos = np.asarray(positions, dtype=float)
    frac = pos / lam - np.floor(pos / lam)
    return (pos > 0) & (frac > beta)


def sample_cells(population: Population, t: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Positions of ``n`` cells drawn with replacement at time ``t``."""
    _, _, pos, _ = population.snapshot(t)
    if pos.size == 0:
        raise RuntimeError(f"no cells alive at t={t}")
    idx = rng.integers(0, pos.size, size=n)
    return pos[idx]


def synth_budding_dataset(
    theta: CloccsParams,
    beta: float,
    t_grid,
    n_per_time: int,
    rng: np.random.Generator,
    config: ModelConfig = ModelConfig(),
    n_founders: int = 100_000,
    population: Population | None = None,
) -> BuddingDataset:
    """Synthetic budded/total counts sampled from a simulated population."""
    t_grid = np.asarray(t_grid, dtype=float)
    if population is None:
        population = simulate_lineage_population(theta, config, t_grid, n_founders, rng)
    budded = np.empty(t_grid.size, dtype=np.int64)
    for i, t in enumerate(t_grid):
        pos = sample_cells(population, float(t), n_per_time, rng)
        budded[i] = int(is_budded(pos, theta.lam, beta).sum())
    return BuddingDataset(times=t_grid, budded=budded, total=np.full(t_grid.size, n_per_time, dtype=np.int64))


def simulate_flow_values(
    theta: CloccsParams,
    shared: FlowShared,
    per_time: FlowPerTime,
    positions: np.ndarray,
    rng: np.random.Generator,
    config: ModelConfig = ModelConfig(),
) -> np.ndarray:
    """Continuous log2 fluorescence values for cells at given positions."""
    mu = expected_fluorescence(shared, per_time, theta.lam, positions, config)
    return mu + rng.normal(0.0, per_time.tau, size=np.shape(positions))


def bin_to_channels(f_values: np.ndarray) -> np.ndarray:
    """Histogram continuous log2 values into the 1024 instrument channels."""
    channels = np.clip(np.rint(np.exp2(f_values)), 1, N_CHANNELS).astype(np.int64)
    return np.bincount(channels - 1, minlength=N_CHANNELS)


def synth_flow_dataset(
    theta: CloccsParams,
    shared: FlowShared,
    per_time_list: list[FlowPerTime],
    t_grid,
    n_per_time: int,
    rng: np.random.Generator,
    config: ModelConfig = ModelConfig(),
    n_founders: int = 100_000,
    population: Population | None = None,
) -> FlowDataset:
    """Synthetic channel histograms sampled from a simulated population."""
    t_grid = np.asarray(t_grid, dtype=float)
    if len(per_time_list) != t_grid.size:
        raise ValueError("need one FlowPerTime per grid time")
    if population is None:
        population = simulate_lineage_population(theta, config, t_grid, n_founders, rng)
    hists = np.empty((t_grid.size, N_CHANNELS), dtype=np.int64)
    for i, (t, pt) in enumerate(zip(t_grid, per_time_list)):
        pos = sample_cells(population, float(t), n_per_time, rng)
        f = simulate_flow_values(theta, shared, pt, pos, rng, config)
        hists[i] = bin_to_channels(f)
    return FlowDataset(times=t_grid, histograms=hists)
