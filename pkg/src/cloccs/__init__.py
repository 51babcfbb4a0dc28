"""Branching-process modeling of cell-synchrony experiments.

Closed-form population/observation likelihoods, Bayesian fitting by
random-walk Metropolis, nested-model comparison by importance-sampled Bayes
factors, and a forward lineage simulator for synthetic data and verification.
"""

from .budding import BuddingDataset, BuddingParams, budded_prob, budding_log_likelihood, fitted_budding_curve
from .flow import (
    FlowDataset,
    FlowHyper,
    FlowPerTime,
    FlowShared,
    expected_fluorescence,
    flow_component_density,
    flow_density,
    flow_density_quadrature,
    flow_log_likelihood,
)
from .population import (
    CloccsParams,
    CohortIndex,
    CohortPositionLaw,
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
from .priors import PriorSpec, check_support, log_prior, sample_prior
from .simulate import Population, SimCell, simulate_lineage_population, synth_budding_dataset, synth_flow_dataset

__version__ = "0.1.0"
