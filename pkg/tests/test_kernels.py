"""Compiled kernels against the reference implementations."""

import math

import numpy as np
import pytest

from cloccs import CloccsParams, FlowPerTime, FlowShared, ModelConfig, budded_prob, budding_log_likelihood
from cloccs import _kernels as K
from cloccs.budding import BuddingDataset
from cloccs.flow import FlowDataset, flow_log_likelihood
from cloccs.population import cohort_mass, cohort_weights, enumerate_cohorts
from conftest import random_theta


def test_cohort_table_matches_reference(config):
    rng = np.random.default_rng(0)
    for _ in range(30):
        theta = random_theta(rng)
        t = rng.uniform(0, 320)
        g, r, mean, mass, sd = K.cohort_table(
            theta.mu0, theta.sigma0_sq, theta.sigmav_sq, theta.lam, theta.delta, config.R, t
        )
        cohorts = enumerate_cohorts(config)
        assert [(int(a), int(b)) for a, b in zip(g, r)] == [(c.g, c.r) for c in cohorts]
        ref = np.array([cohort_mass(theta, c, t) for c in cohorts])
        # libm vs cephes erfc differ by ulps (and in underflow point) in
        # extreme tails
        np.testing.assert_allclose(mass, ref, rtol=1e-12, atol=1e-290)
        np.testing.assert_allclose(mass / mass.sum(), cohort_weights(theta, config, t), rtol=1e-12, atol=1e-290)


def test_budded_prob_kernel_matches(config):
    rng = np.random.default_rng(1)
    for _ in range(60):
        theta = random_theta(rng)
        beta = rng.uniform(0.05, 0.9)
        t = rng.uniform(0, 320)
        got = K.budded_prob_kernel(
            theta.mu0, theta.sigma0_sq, theta.sigmav_sq, theta.lam, theta.delta, beta, config.R, config.C, t
        )
        assert got == pytest.approx(budded_prob(theta, beta, t, config), abs=1e-11)


def test_budding_loglik_kernel_matches(table_theta, config):
    rng = np.random.default_rng(2)
    times = np.sort(rng.uniform(20, 300, size=12))
    total = np.full(12, 200)
    budded = rng.integers(0, 201, size=12)
    ds = BuddingDataset(times=times, budded=budded, total=total)
    got = K.budding_loglik_kernel(
        table_theta.mu0, table_theta.sigma0_sq, table_theta.sigmav_sq, table_theta.lam, table_theta.delta,
        0.15, config.R, config.C, times, budded.astype(float), total.astype(float),
    )
    assert got == pytest.approx(budding_log_likelihood(table_theta, 0.15, ds, config), rel=1e-12)


def test_flow_loglik_kernel_matches(table_theta, flow_shared, config):
    rng = np.random.default_rng(3)
    times = np.array([40.0, 120.0, 200.0, 280.0])
    hists = np.zeros((4, 1024), dtype=np.int64)
    for i in range(4):
        chans = rng.integers(200, 760, size=400)
        np.add.at(hists[i], chans - 1, 1)
    ds = FlowDataset(times=times, histograms=hists)
    pts = [FlowPerTime(alpha1=8.2 + 0.05 * i, alpha2=1.0, tau=0.12 + 0.01 * i) for i in range(4)]

    fs, cs, offs = [], [], [0]
    for i in range(4):
        f, c = ds.channel_values(i)
        fs.append(f); cs.append(c); offs.append(offs[-1] + f.size)
    lls = K.flow_loglik_all_kernel(
        table_theta.mu0, table_theta.sigma0_sq, table_theta.sigmav_sq, table_theta.lam, table_theta.delta,
        flow_shared.gamma1, flow_shared.gamma2,
        np.array([p.alpha1 for p in pts]), np.array([p.alpha2 for p in pts]), np.array([p.tau for p in pts]),
        config.R, config.C, times, np.concatenate(fs), np.concatenate(cs), np.array(offs, dtype=np.int64),
    )
    ref = flow_log_likelihood(table_theta, flow_shared, pts, ds, config)
    # Support pruning perturbs the kernel value by ~1e-10 relative terms.
    assert float(lls.sum()) == pytest.approx(ref, abs=1e-4)
    # Tight agreement when nothing is pruned: single dominant cohort.
    tight = CloccsParams(mu0=60, sigma0_sq=100, sigmav_sq=1e-6, lam=80, delta=40)
    ds1 = FlowDataset(times=times[:1], histograms=hists[:1])
    f0, c0 = ds1.channel_values(0)
    ll_k = K.flow_point_loglik_kernel(
        tight.mu0, tight.sigma0_sq, tight.sigmav_sq, tight.lam, tight.delta,
        flow_shared.gamma1, flow_shared.gamma2, 8.2, 1.0, 0.12, config.R, config.C, 40.0, f0, c0,
    )
    ref1 = flow_log_likelihood(tight, flow_shared, pts[:1], ds1, config)
    assert ll_k == pytest.approx(ref1, rel=1e-9)


def test_degenerate_start_variance_at_positive_time(config):
    # sigma0_sq = 0 submodels: position sd collapses to t * sigma_v.
    t = 60.0
    got = K.budded_prob_kernel(0.0, 0.0, 0.0025, 80.0, 0.0, 0.15, config.R, config.C, t)
    assert 0.0 <= got <= 1.0
    sd = t * 0.05
    # single active interval around position 60 in cycle 0
    from scipy.stats import norm

    expected_cycle0 = norm.cdf((80.0 - 60.0) / sd) - norm.cdf((0.15 * 80.0 - 60.0) / sd)
    assert got == pytest.approx(expected_cycle0, abs=1e-6)
