import math

import numpy as np
import pytest

from cloccs import (
    CloccsParams,
    CohortIndex,
    FlowPerTime,
    FlowShared,
    ModelConfig,
    budded_prob,
    cohort_weights,
    population_mass,
    simulate_lineage_population,
    synth_budding_dataset,
    synth_flow_dataset,
)
from cloccs.flow import flow_density
from cloccs.population import enumerate_cohorts, position_cdf
from cloccs.simulate import bin_to_channels, is_budded, sample_cells, simulate_flow_values


class TestLineagePopulation:
    def test_deterministic_first_division(self, config):
        # With no velocity spread and a tight start, the first daughter
        # appears exactly when founders cross one cycle: t = mu0 + lam.
        theta = CloccsParams(mu0=60, sigma0_sq=1e-8, sigmav_sq=0, lam=80, delta=40)
        rng = np.random.default_rng(0)
        pop = simulate_lineage_population(theta, config, [200.0], 500, rng)
        daughters = pop.birth[pop.g > 0]
        assert daughters.size == 500
        np.testing.assert_allclose(daughters, 140.0, atol=1e-2)

    def test_founder_mean_position(self, table_theta, config):
        rng = np.random.default_rng(1)
        pop = simulate_lineage_population(table_theta, config, [100.0], 40_000, rng)
        g, r, pos, _ = pop.snapshot(100.0)
        founders = pos[(g == 0) & (r == 0)]
        se = founders.std() / math.sqrt(founders.size)
        assert abs(founders.mean() - (-table_theta.mu0 + 100.0)) < 3 * se

    def test_cohort_proportions_match_weights(self, table_theta, config):
        rng = np.random.default_rng(2)
        t_grid = [120.0, 240.0]
        pop = simulate_lineage_population(table_theta, config, t_grid, 150_000, rng)
        for t in t_grid:
            g, r, pos, fid = pop.snapshot(t)
            w = cohort_weights(table_theta, config, t)
            for k, c in enumerate(enumerate_cohorts(config)):
                if w[k] < 1e-5:
                    continue
                emp = np.mean((g == c.g) & (r == c.r))
                se = math.sqrt(max(w[k] * (1 - w[k]), 1e-12) / pos.size) * 2.0  # clustering headroom
                assert abs(emp - w[k]) < 4 * se + 2e-4, (c, emp, w[k])

    def test_population_growth_matches_mass(self, table_theta, config):
        rng = np.random.default_rng(3)
        pop = simulate_lineage_population(table_theta, config, [260.0], 120_000, rng)
        q_emp = pop.size_at(260.0) / pop.n_founders
        counts = np.bincount(pop.founder[pop.birth <= 260.0], minlength=pop.n_founders)
        se = counts.std() / math.sqrt(pop.n_founders)
        assert abs(q_emp - population_mass(table_theta, config, 260.0)) < 3 * se

    def test_positions_match_mixture_cdf(self, table_theta, config):
        rng = np.random.default_rng(4)
        pop = simulate_lineage_population(table_theta, config, [180.0], 200_000, rng)
        _, _, pos, _ = pop.snapshot(180.0)
        pos = np.sort(pos)
        model = position_cdf(table_theta, config, 180.0, pos)
        emp = np.arange(1, pos.size + 1) / pos.size
        assert np.max(np.abs(emp - model)) < 0.005

    def test_determinism(self, table_theta, config):
        a = simulate_lineage_population(table_theta, config, [150.0], 2000, np.random.default_rng(42))
        b = simulate_lineage_population(table_theta, config, [150.0], 2000, np.random.default_rng(42))
        np.testing.assert_array_equal(a.birth, b.birth)
        np.testing.assert_array_equal(a.velocity, b.velocity)

    def test_cells_view(self, config):
        theta = CloccsParams(mu0=60, sigma0_sq=1.0, sigmav_sq=0, lam=80, delta=40)
        pop = simulate_lineage_population(theta, config, [250.0], 5, np.random.default_rng(5))
        cells = pop.cells()
        assert len(cells) == len(pop)
        founder = cells[0]
        assert founder.cohort == CohortIndex(0, 0)
        assert founder.position(10.0) == pytest.approx(founder.start_offset + 10.0 * founder.velocity)


class TestBuddedTagging:
    def test_beta_zero_buds_everything_cycling(self, table_theta):
        pos = np.array([-50.0, -1.0, 0.5, 40.0, 85.0])
        budded = is_budded(pos, table_theta.lam, 1e-9)
        np.testing.assert_array_equal(budded, [False, False, True, True, True])

    def test_beta_near_one_buds_nothing(self, table_theta):
        rng = np.random.default_rng(6)
        pos = rng.uniform(0, 4 * table_theta.lam, size=1000)
        assert is_budded(pos, table_theta.lam, 1.0 - 1e-12).mean() < 0.01

    def test_budding_dataset_matches_model(self, table_theta, config):
        rng = np.random.default_rng(7)
        t_grid = np.array([60.0, 140.0, 220.0])
        ds = synth_budding_dataset(table_theta, 0.15, t_grid, 40_000, rng, config, n_founders=150_000)
        for t, b, n in zip(ds.times, ds.budded, ds.total):
            p = budded_prob(table_theta, 0.15, float(t), config)
            se = math.sqrt(p * (1 - p) / n)
            assert abs(b / n - p) < 3.5 * se, (t, b / n, p)


class TestFlowSynthesis:
    def test_degenerate_noise_single_channel(self, config):
        theta = CloccsParams(mu0=60, sigma0_sq=1.0, sigmav_sq=0, lam=80, delta=40)
        shared = FlowShared(0.05, 0.35)
        pt = FlowPerTime(alpha1=8.0, alpha2=1.0, tau=1e-9)
        rng = np.random.default_rng(8)
        ds = synth_flow_dataset(theta, shared, [pt], [20.0], 500, rng, config, n_founders=20_000)
        channels = np.nonzero(ds.histograms[0])[0] + 1
        assert list(channels) == [round(2**8.0)]

    def test_no_clamping_in_reasonable_range(self, table_theta, flow_shared, config):
        pt = FlowPerTime(alpha1=8.24, alpha2=1.04, tau=0.11)
        assert pt.alpha1 + pt.alpha2 + 6 * pt.tau < 10.0
        rng = np.random.default_rng(9)
        ds = synth_flow_dataset(table_theta, flow_shared, [pt], [150.0], 20_000, rng, config, n_founders=50_000)
        assert ds.histograms[0, -1] == 0 and ds.histograms[0, 0] == 0

    def test_values_match_density_ks(self, table_theta, flow_shared, config):
        rng = np.random.default_rng(10)
        pt = FlowPerTime(alpha1=8.24, alpha2=1.04, tau=0.123)
        pop = simulate_lineage_population(table_theta, config, [170.0], 150_000, rng)
        pos = sample_cells(pop, 170.0, 100_000, rng)
        f = np.sort(simulate_flow_values(table_theta, flow_shared, pt, pos, rng, config))
        grid = np.linspace(f[0] - 0.5, f[-1] + 0.5, 6000)
        dens = flow_density(table_theta, flow_shared, pt, grid, 170.0, config)
        cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(grid))])
        cdf /= cdf[-1]
        emp = np.arange(1, f.size + 1) / f.size
        ks = np.max(np.abs(emp - np.interp(f, grid, cdf)))
        assert ks < 0.01

    def test_bin_roundtrip(self):
        f = np.array([0.0, 3.0, 10.0, 11.0])
        hist = bin_to_channels(f)
        assert hist.sum() == 4
        assert hist[0] == 1          # 2^0 -> channel 1
        assert hist[7] == 1          # 2^3 -> channel 8
        assert hist[1023] == 2       # top channel and clamped overflow
