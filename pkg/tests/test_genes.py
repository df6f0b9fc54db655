"""Gene-law unit tests.

Reference numbers were computed by hand or with adaptive quadrature,
independently of the module's own Gauss-Legendre rule.
"""

import numpy as np
import pytest

from gxefit.errors import NumericError, ParameterError, SupportError
from gxefit.genes import BernoulliGene, GeneQuadrature, LaplaceGene, gene_model


def test_bernoulli_density_values():
    dist = BernoulliGene(0.26)
    assert dist.density(1.0) == 0.26
    assert dist.density(0.0) == 0.74
    np.testing.assert_allclose(dist.density(np.array([0.0, 1.0, 1.0])), [0.74, 0.26, 0.26])


def test_bernoulli_score_values():
    # d/dp log f = g/p - (1-g)/(1-p)
    dist = BernoulliGene(0.26)
    np.testing.assert_allclose(dist.score_beta4(1.0), 3.846153846153846, rtol=1e-15)
    np.testing.assert_allclose(dist.score_beta4(0.0), -1.3513513513513513, rtol=1e-15)


def test_bernoulli_rejects_off_support():
    dist = BernoulliGene(0.3)
    with pytest.raises(SupportError):
        dist.density(0.5)
    with pytest.raises(SupportError):
        dist.score_beta4(np.array([0.0, 2.0]))


def test_bernoulli_parameter_range():
    for bad in (0.0, 1.0, -0.1, np.nan, np.inf):
        with pytest.raises(ParameterError):
            BernoulliGene(bad)


def test_laplace_density_values():
    np.testing.assert_allclose(LaplaceGene(1.0).density(0.0), 0.7071067811865475, rtol=1e-15)
    np.testing.assert_allclose(LaplaceGene(0.5).density(1.3), 0.07427357821433388, rtol=1e-14)
    np.testing.assert_allclose(LaplaceGene(0.18).density(0.5), 0.3147926713959364, rtol=1e-14)
    np.testing.assert_allclose(LaplaceGene(0.18).density(-0.5), LaplaceGene(0.18).density(0.5), rtol=0)


def test_laplace_score_values():
    np.testing.assert_allclose(LaplaceGene(2.0).score_beta4(-0.7), -0.075, rtol=1e-14)
    np.testing.assert_allclose(LaplaceGene(0.5).score_beta4(2.0), 3.0, rtol=1e-14)


def test_laplace_scale_variance_relation():
    dist = LaplaceGene(2.0)
    assert dist.scale == 1.0
    np.testing.assert_allclose(LaplaceGene(0.18).scale, 0.3, rtol=1e-15)


def test_laplace_parameter_range():
    for bad in (0.0, -1.0, np.nan, np.inf):
        with pytest.raises(ParameterError):
            LaplaceGene(bad)


def test_quadrature_unit_mass_and_moments():
    for dist in (BernoulliGene(0.065), BernoulliGene(0.26), LaplaceGene(0.18), LaplaceGene(2.0)):
        np.testing.assert_allclose(dist.integrate(lambda g: np.ones_like(g)), 1.0, atol=1e-10)
    # Laplace: zero mean, variance beta_4, fourth moment 6 beta_4^2
    dist = LaplaceGene(0.8)
    np.testing.assert_allclose(dist.integrate(lambda g: g), 0.0, atol=1e-12)
    np.testing.assert_allclose(dist.integrate(lambda g: g * g), 0.8, rtol=1e-9)
    np.testing.assert_allclose(dist.integrate(lambda g: g ** 4), 6.0 * 0.8 ** 2, rtol=1e-7)


def test_quadrature_score_zero_mean():
    # E[d log f / d beta_4] = 0 under the law itself
    for dist in (BernoulliGene(0.11), LaplaceGene(0.6)):
        assert abs(dist.integrate(dist.score_beta4)) < 1e-9


def test_bernoulli_quadrature_is_exact_two_point_sum():
    quad = BernoulliGene(0.3).quadrature()
    assert isinstance(quad, GeneQuadrature)
    assert quad.panel_count == 0
    np.testing.assert_array_equal(quad.nodes, [0.0, 1.0])
    np.testing.assert_array_equal(quad.weights, [0.7, 0.3])


def test_score_matches_log_density_difference_quotient():
    h = 1e-6
    for dist in (BernoulliGene(0.37), LaplaceGene(1.4)):
        g = np.array([0.0, 1.0]) if dist.kind == "bernoulli" else np.array([-2.1, -0.3, 0.4, 3.7])
        up = type(dist)(dist.beta4 + h)
        dn = type(dist)(dist.beta4 - h)
        numeric = (np.log(up.density(g)) - np.log(dn.density(g))) / (2.0 * h)
        np.testing.assert_allclose(dist.score_beta4(g), numeric, atol=1e-7)


def test_unconstrained_transform_round_trip():
    for dist, values in (
        (BernoulliGene(0.5), [0.01, 0.26, 0.93]),
        (LaplaceGene(1.0), [0.05, 0.8, 7.5]),
    ):
        for v in values:
            np.testing.assert_allclose(dist.from_unconstrained(dist.to_unconstrained(v)), v, rtol=1e-12)


def test_with_beta4_rebinds_parameter_only():
    dist = LaplaceGene(0.5).with_beta4(2.0)
    assert isinstance(dist, LaplaceGene)
    assert dist.beta4 == 2.0
    assert BernoulliGene(0.1).with_beta4(0.4) == BernoulliGene(0.4)


def test_sampling_matches_law(seed=1234):
    rng = np.random.default_rng(seed)
    freq = BernoulliGene(0.26).sample(rng, 200_000).mean()
    np.testing.assert_allclose(freq, 0.26, atol=0.004)
    draws = LaplaceGene(2.0).sample(rng, 200_000)
    np.testing.assert_allclose(draws.mean(), 0.0, atol=0.02)
    np.testing.assert_allclose(draws.var(), 2.0, rtol=0.03)


def test_integrate_rejects_non_finite_integrand():
    with pytest.raises(NumericError):
        LaplaceGene(1.0).integrate(lambda g: np.where(np.abs(g) < 0.5, np.inf, 1.0))


def test_factory_by_name():
    assert gene_model("bernoulli", 0.2) == BernoulliGene(0.2)
    assert gene_model("laplace", 1.5) == LaplaceGene(1.5)
    with pytest.raises(ParameterError):
        gene_model("normal", 1.0)
