"""Shared fixtures.

The mini samples are small enough that every quantity downstream of the gene
integrals was recomputed independently (explicit per-record loops, adaptive
quadrature for the Laplace law) and frozen into the tests that use them.
"""

import numpy as np
import pytest

from gxefit import estimator, simulate
from gxefit.data import CaseControlSample
from gxefit.genes import BernoulliGene, LaplaceGene
from gxefit.logistic import ParamVector


@pytest.fixture(scope="session")
def bern_mini():
    beta = ParamVector(-1.2, 0.4, 0.15, -0.3, 0.3)
    dist = BernoulliGene(0.3)
    sample = CaseControlSample(
        np.array([0, 0, 1, 1]),
        np.array([0.0, 1.0, 0.0, 1.0]),
        np.array([0.5, 1.0, 2.0, 4.0]),
    )
    return beta, dist, sample


@pytest.fixture(scope="session")
def lap_mini():
    beta = ParamVector(-1.0, 0.3, 0.2, -0.15, 0.8)
    dist = LaplaceGene(0.8)
    sample = CaseControlSample(
        np.array([0, 0, 1, 1, 1]),
        np.array([0.4, -1.1, 0.0, 2.3, -0.6]),
        np.array([0.2, 1.5, 0.8, 3.0, 6.0]),
    )
    return beta, dist, sample


@pytest.fixture(scope="session")
def bern_data():
    """One seeded draw from the common-variant Bernoulli benchmark."""
    pop = simulate.experiment_population(1, 2)
    rng = np.random.default_rng(99)
    return pop, simulate.sample_case_control(pop, 500, 500, rng)


@pytest.fixture(scope="session")
def bern_fit(bern_data):
    pop, sample = bern_data
    return estimator.fit(sample, pop.gene)


@pytest.fixture(scope="session")
def lap_data():
    pop = simulate.experiment_population(2, 2)
    rng = np.random.default_rng(4)
    return pop, simulate.sample_case_control(pop, 250, 250, rng)


@pytest.fixture(scope="session")
def lap_fit(lap_data):
    pop, sample = lap_data
    return estimator.fit(sample, pop.gene)
