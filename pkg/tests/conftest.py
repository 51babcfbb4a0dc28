import math

import numpy as np
import pytest

from cloccs import CloccsParams, FlowPerTime, FlowShared, ModelConfig


@pytest.fixture
def table_theta():
    """Parameters near the reference joint fit."""
    return CloccsParams(mu0=94.0, sigma0_sq=324.0, sigmav_sq=0.000625, lam=79.5, delta=44.0)


@pytest.fixture
def flow_shared():
    return FlowShared(gamma1=0.05, gamma2=0.35)


@pytest.fixture
def flow_per_time():
    return FlowPerTime(alpha1=8.24, alpha2=1.04, tau=0.123)


@pytest.fixture
def config():
    return ModelConfig()


def random_theta(rng: np.random.Generator) -> CloccsParams:
    """Moderate parameter draws keeping posteriors well-conditioned."""
    return CloccsParams(
        mu0=rng.uniform(0.0, 150.0),
        sigma0_sq=rng.uniform(4.0, 900.0),
        sigmav_sq=rng.uniform(0.0, 0.01),
        lam=rng.uniform(40.0, 120.0),
        delta=rng.uniform(0.0, 80.0),
    )


def design_grid(n: int = 33, start: float = 30.0, step: float = 8.0) -> np.ndarray:
    return start + step * np.arange(n)
