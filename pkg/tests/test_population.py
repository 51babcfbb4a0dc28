import math

import numpy as np
import pytest
from scipy.integrate import quad

from cloccs import (
    CloccsParams,
    CohortIndex,
    ModelConfig,
    cohort_mass,
    cohort_position_law,
    cohort_weight,
    cohort_weights,
    enumerate_cohorts,
    lineage_multiplicity,
    population_mass,
    position_density,
)
from conftest import random_theta


def count_lineage_paths(g: int, r: int, R: int = 10) -> int:
    """Brute-force oracle: walk the branching tree counting paths to {g,r}.

    A cell of cohort {gg, rr} contributes children {gg+1, rr+k} for k >= 1.
    """
    if g == 0 and r == 0:
        return 1
    total = 0
    def walk(gg, rr):
        nonlocal total
        if gg == g and rr == r:
            total += 1
            return
        if gg >= g or rr >= r:
            return
        for k in range(1, r - rr + 1):
            walk(gg + 1, rr + k)
    walk(0, 0)
    return total


class TestEnumerateCohorts:
    def test_r1(self):
        assert enumerate_cohorts(ModelConfig(R=1, C=1)) == [CohortIndex(0, 0), CohortIndex(1, 1)]

    def test_r2(self):
        expected = [CohortIndex(0, 0), CohortIndex(1, 1), CohortIndex(1, 2), CohortIndex(2, 2)]
        assert enumerate_cohorts(ModelConfig(R=2, C=2)) == expected

    def test_r4_count_matches_bruteforce(self):
        # Count pairs 0 < g <= r <= 4 by direct enumeration.
        brute = 1 + sum(1 for r in range(1, 5) for g in range(1, 5) if g <= r)
        assert brute == 11
        assert len(enumerate_cohorts(ModelConfig(R=4, C=4))) == brute

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ModelConfig(R=0, C=4)
        with pytest.raises(ValueError):
            ModelConfig(R=6, C=4)


class TestLineageMultiplicity:
    def test_founder(self):
        assert lineage_multiplicity(CohortIndex(0, 0)) == 1

    def test_two_paths_into_23(self):
        # {1,1} and {1,2} both feed {2,3}.
        assert lineage_multiplicity(CohortIndex(2, 3)) == 2

    def test_35_by_tree_enumeration(self):
        assert count_lineage_paths(3, 5) == 6
        assert lineage_multiplicity(CohortIndex(3, 5)) == 6

    def test_all_cohorts_up_to_r6_match_tree(self):
        for c in enumerate_cohorts(ModelConfig(R=6, C=6)):
            assert lineage_multiplicity(c) == count_lineage_paths(c.g, c.r)

    def test_invalid(self):
        with pytest.raises(ValueError):
            lineage_multiplicity(CohortIndex(3, 2))


class TestCohortPositionLaw:
    def test_founder_law(self):
        theta = CloccsParams(mu0=100, sigma0_sq=4, sigmav_sq=0, lam=80, delta=40)
        law = cohort_position_law(theta, CohortIndex(0, 0), 50.0)
        assert law.mean == -50.0
        assert law.sd == 2.0
        assert law.left_limit == -math.inf

    def test_daughter_law(self):
        theta = CloccsParams(mu0=100, sigma0_sq=4, sigmav_sq=0, lam=80, delta=40)
        law = cohort_position_law(theta, CohortIndex(1, 1), 200.0)
        assert law.mean == pytest.approx(-20.0)
        assert law.sd == 2.0
        assert law.left_limit == -40.0

    def test_sd_combines_time(self):
        theta = CloccsParams(mu0=0, sigma0_sq=4, sigmav_sq=0.01, lam=80, delta=40)
        law = cohort_position_law(theta, CohortIndex(0, 0), 100.0)
        assert law.sd == pytest.approx(math.sqrt(104.0))


class TestCohortMass:
    def test_founder_always_one(self, table_theta):
        for t in (0.0, 55.0, 300.0):
            assert cohort_mass(table_theta, CohortIndex(0, 0), t) == 1.0

    def test_half_mass_at_threshold(self):
        theta = CloccsParams(mu0=0, sigma0_sq=1, sigmav_sq=0, lam=50, delta=10)
        assert cohort_mass(theta, CohortIndex(1, 1), 50.0) == pytest.approx(0.5)

    def test_second_generation_half_mass(self):
        theta = CloccsParams(mu0=0, sigma0_sq=1, sigmav_sq=0, lam=50, delta=10)
        assert cohort_mass(theta, CohortIndex(2, 2), 110.0) == pytest.approx(0.5)

    def test_nondecreasing_and_bounded(self):
        rng = np.random.default_rng(7)
        grid = np.linspace(0.0, 400.0, 60)
        for _ in range(25):
            theta = random_theta(rng)
            for c in (CohortIndex(1, 1), CohortIndex(2, 3), CohortIndex(3, 4)):
                masses = [cohort_mass(theta, c, t) for t in grid]
                assert all(b >= a - 1e-12 for a, b in zip(masses, masses[1:]))
                assert max(masses) <= math.comb(c.r - 1, c.g - 1) + 1e-12


class TestPopulationMass:
    def test_initial_population(self):
        theta = CloccsParams(mu0=100, sigma0_sq=1, sigmav_sq=0, lam=80, delta=40)
        assert population_mass(theta, ModelConfig(), 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_one_doubling(self):
        # Just past the first division wave of a tight population.
        theta = CloccsParams(mu0=50, sigma0_sq=1, sigmav_sq=0, lam=80, delta=40)
        q = population_mass(theta, ModelConfig(), 50.0 + 80.0 + 10.0)
        assert q == pytest.approx(2.0, abs=1e-3)

    def test_nondecreasing_in_t(self):
        rng = np.random.default_rng(11)
        cfg = ModelConfig()
        for _ in range(20):
            theta = random_theta(rng)
            q = [population_mass(theta, cfg, t) for t in np.linspace(0, 400, 80)]
            assert all(b >= a - 1e-12 for a, b in zip(q, q[1:]))
            assert min(q) >= 1.0


class TestCohortWeights:
    def test_all_founders_at_release(self, table_theta, config):
        assert cohort_weight(table_theta, config, CohortIndex(0, 0), 0.0) == pytest.approx(1.0, abs=1e-10)

    def test_weights_sum_to_one(self, config):
        rng = np.random.default_rng(3)
        for _ in range(100):
            theta = random_theta(rng)
            t = rng.uniform(0, 350)
            w = cohort_weights(theta, config, t)
            assert abs(w.sum() - 1.0) < 1e-12
            assert np.all(w >= 0)


class TestPositionDensity:
    def test_single_cohort_regime_is_normal(self, config):
        theta = CloccsParams(mu0=100, sigma0_sq=25, sigmav_sq=1e-4, lam=80, delta=40)
        t = 20.0
        p = np.linspace(-130, -40, 50)
        sd = theta.position_sd(t)
        expected = np.exp(-0.5 * ((p + 100 - t) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
        got = position_density(theta, config, t, p)
        np.testing.assert_allclose(got, expected, rtol=1e-10)

    def test_truncation_zeroes_daughter_components(self, table_theta, config):
        # Below -delta only the founder component can contribute: the mixture
        # density there equals the founder weight times its untruncated
        # normal density.
        t = 250.0
        p = -table_theta.delta - 1.0
        w = cohort_weights(table_theta, config, t)
        sd = table_theta.position_sd(t)
        mean = -table_theta.mu0 + t
        founder_only = w[0] * math.exp(-0.5 * ((p - mean) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
        assert position_density(table_theta, config, t, p) == pytest.approx(founder_only, rel=1e-12)

    def test_integrates_to_one(self, config):
        rng = np.random.default_rng(17)
        for _ in range(20):
            theta = random_theta(rng)
            t = rng.uniform(0, 300)
            sd = theta.position_sd(t)
            lo = -theta.mu0 - 12 * sd
            hi = t + 12 * sd
            val, err = quad(
                lambda p: position_density(theta, config, t, p),
                lo,
                hi,
                points=[-theta.delta],
                limit=400,
            )
            assert abs(val - 1.0) < 1e-8

    def test_negative_velocity_diagnostic(self, table_theta):
        p = table_theta.negative_velocity_prob()
        assert 0.0 <= p < 1e-200
