"""Population and replication-harness tests.

The population disease rates asserted here were recomputed with adaptive
quadrature against the capped log-normal environment law, outside the
package.
"""

import numpy as np
import pytest

from gxefit import estimator, simulate
from gxefit.errors import NumericError, ParameterError
from gxefit.genes import BernoulliGene, LaplaceGene
from gxefit.logistic import ParamVector

# fraction of the capped log-normal's mass sitting exactly on the cap
CAP_ATOM = 0.010651099341700127


def test_truncated_lognormal_sampling():
    rng = np.random.default_rng(42)
    draws = simulate.TruncatedLogNormal().sample(rng, 400_000)
    assert draws.max() <= 10.0
    at_cap = np.mean(draws == 10.0)
    np.testing.assert_allclose(at_cap, CAP_ATOM, atol=6e-4)


def test_truncated_lognormal_quadrature_matches_sampling():
    nodes, weights = simulate.TruncatedLogNormal().quadrature()
    np.testing.assert_allclose(weights.sum(), 1.0, atol=1e-12)
    np.testing.assert_allclose(weights[-1], CAP_ATOM, rtol=1e-12)
    mean = float(nodes @ weights)
    rng = np.random.default_rng(9)
    draws = simulate.TruncatedLogNormal().sample(rng, 2_000_000)
    np.testing.assert_allclose(mean, draws.mean(), rtol=2e-3)


def test_population_spec_rebinds_gene_parameter():
    pop = simulate.PopulationSpec(ParamVector(-3.0, 0.2, 0.1, 0.3, 0.44), BernoulliGene(0.01))
    assert pop.gene.beta4 == 0.44


def test_benchmark_populations():
    table = {
        (1, 1): ("bernoulli", [-3.2, 0.26, 0.1, 0.3, 0.065]),
        (1, 2): ("bernoulli", [-3.45, 0.26, 0.1, 0.3, 0.26]),
        (2, 1): ("laplace", [-3.2, 0.26, 0.1, 0.3, 0.18]),
        (2, 2): ("laplace", [-3.73, 0.26, 0.1, 0.3, 2.0]),
    }
    for key, (kind, beta) in table.items():
        pop = simulate.experiment_population(*key)
        assert pop.gene.kind == kind
        np.testing.assert_array_equal(pop.beta_true.as_array(), beta)
    with pytest.raises(ParameterError):
        simulate.experiment_population(3, 1)


def test_population_disease_rates_near_five_percent():
    # adaptive-quadrature reference values, all tuned near 5%
    want = {
        (1, 1): 0.05039765478521984,
        (1, 2): 0.050218135299941014,
        (2, 1): 0.04988637753286872,
        (2, 2): 0.049524533182631565,
    }
    for key, rate in want.items():
        pop = simulate.experiment_population(*key)
        np.testing.assert_allclose(simulate.population_disease_rate(pop), rate, rtol=1e-9)
        np.testing.assert_allclose(
            simulate.population_alpha(pop), (1.0 - rate) / rate, rtol=1e-9
        )


def test_sample_units_seeded_and_consistent():
    pop = simulate.experiment_population(1, 1)
    d1, g1, e1 = simulate.sample_units(pop, 3000, np.random.default_rng(5))
    d2, g2, e2 = simulate.sample_units(pop, 3000, np.random.default_rng(5))
    np.testing.assert_array_equal(d1, d2)
    np.testing.assert_array_equal(g1, g2)
    np.testing.assert_array_equal(e1, e2)
    assert set(np.unique(g1)) <= {0.0, 1.0}
    assert 0.0 < d1.mean() < 0.2


def test_sample_case_control_counts_and_support():
    pop = simulate.experiment_population(2, 1)
    sample = simulate.sample_case_control(pop, 120, 80, np.random.default_rng(1))
    assert (sample.n1, sample.n0, sample.n) == (120, 80, 200)
    # cases occupy the leading block
    np.testing.assert_array_equal(sample.d, np.repeat([1, 0], [120, 80]))


def test_sample_case_control_seeded():
    pop = simulate.experiment_population(1, 2)
    a = simulate.sample_case_control(pop, 50, 50, np.random.default_rng(8))
    b = simulate.sample_case_control(pop, 50, 50, np.random.default_rng(8))
    np.testing.assert_array_equal(a.g, b.g)
    np.testing.assert_array_equal(a.e, b.e)


def test_sample_case_control_matches_conditional_law():
    # accepted controls carry the e-distribution of non-cases: with a rare
    # disease that is close to the marginal law, and cases skew upward
    pop = simulate.experiment_population(1, 2)
    sample = simulate.sample_case_control(pop, 4000, 4000, np.random.default_rng(17))
    e_cases = sample.e[sample.d == 1]
    e_controls = sample.e[sample.d == 0]
    assert e_cases.mean() > e_controls.mean()
    np.testing.assert_allclose(e_controls.mean(), 1.60, atol=0.1)


def test_sample_hypothetical_draws_binomial_case_count():
    pop = simulate.experiment_population(1, 2)
    counts = [
        simulate.sample_hypothetical(pop, 300, 0.5, np.random.default_rng(k)).n1
        for k in range(40)
    ]
    counts = np.asarray(counts)
    assert counts.std() > 0.0
    np.testing.assert_allclose(counts.mean(), 150.0, atol=15.0)
    with pytest.raises(ParameterError):
        simulate.sample_hypothetical(pop, 300, 1.2, np.random.default_rng(0))


def test_experiment_spec_validation():
    with pytest.raises(ParameterError):
        simulate.ExperimentSpec(n_cases=0)
    with pytest.raises(ParameterError):
        simulate.ExperimentSpec(replications=0)
    with pytest.raises(ParameterError):
        simulate.ExperimentSpec(seed=-1)


def test_run_experiment_deterministic_and_summarized():
    pop = simulate.experiment_population(1, 2)
    exp = simulate.ExperimentSpec(n_cases=200, n_controls=200, replications=3, seed=12)
    a = simulate.run_experiment(pop, exp)
    b = simulate.run_experiment(pop, exp)
    np.testing.assert_array_equal(a.mean_est, b.mean_est)
    np.testing.assert_array_equal(a.sample_sd, b.sample_sd)
    assert a.n_converged == 3 and a.replications == 3
    assert a.details is None
    c = simulate.run_experiment(pop, exp, keep_details=True)
    assert len(c.details) == 3
    np.testing.assert_array_equal(
        np.stack([r["beta"] for r in c.details]).mean(axis=0), a.mean_est
    )


def test_run_experiment_worker_count_invisible():
    pop = simulate.experiment_population(1, 2)
    exp = simulate.ExperimentSpec(n_cases=200, n_controls=200, replications=4, seed=3)
    serial = simulate.run_experiment(pop, exp, workers=1)
    pooled = simulate.run_experiment(pop, exp, workers=3)
    np.testing.assert_array_equal(serial.mean_est, pooled.mean_est)
    np.testing.assert_array_equal(serial.mean_se, pooled.mean_se)


def test_run_experiment_rejects_mass_failure(monkeypatch):
    pop = simulate.experiment_population(1, 2)
    exp = simulate.ExperimentSpec(n_cases=60, n_controls=60, replications=5, seed=1)
    monkeypatch.setattr(
        simulate, "_replicate", lambda pop, exp, config, rep: {"rep": rep, "converged": False}
    )
    with pytest.raises(NumericError, match="failed to converge"):
        simulate.run_experiment(pop, exp)


def test_run_experiment_tolerates_rare_failure(monkeypatch):
    # one failure in twelve sits under the 10% harness threshold
    pop = simulate.experiment_population(1, 2)
    exp = simulate.ExperimentSpec(n_cases=150, n_controls=150, replications=12, seed=21)
    rng = np.random.default_rng(0)

    def synthetic(pop, exp, config, rep):
        if rep == 5:
            return {"rep": rep, "converged": False, "error": "synthetic"}
        return {"rep": rep, "converged": True, "beta": rng.normal(size=5), "se": np.ones(5)}

    monkeypatch.setattr(simulate, "_replicate", synthetic)
    summary = simulate.run_experiment(pop, exp)
    assert summary.n_converged == 11
    assert summary.replications == 12


def test_panel_rows_frequency_column():
    pop = simulate.experiment_population(1, 2)
    exp = simulate.ExperimentSpec(n_cases=200, n_controls=200, replications=3, seed=12)
    summary = simulate.run_experiment(pop, exp, keep_details=True)
    rows = simulate.panel_rows(pop, summary)
    assert rows["gene_column"] == "frequency"
    np.testing.assert_array_equal(rows["true"], pop.beta_true.as_array())
    np.testing.assert_allclose(rows["est"], summary.mean_est, rtol=1e-14)
    np.testing.assert_allclose(rows["sd"], summary.sample_sd, rtol=1e-14)
    np.testing.assert_allclose(rows["sd_hat"], summary.mean_se, rtol=1e-14)


def test_panel_rows_scale_column_transform():
    # hand-built details: the variance estimates 2.0 and 0.5 become scales
    # 1.0 and 0.5, and the se transforms by the derivative 1/(4 b)
    pop = simulate.experiment_population(2, 2)
    beta_a = np.array([-3.7, 0.3, 0.1, 0.3, 2.0])
    beta_b = np.array([-3.8, 0.2, 0.1, 0.3, 0.5])
    se_a = np.array([0.3, 0.07, 0.04, 0.04, 0.2])
    se_b = np.array([0.3, 0.07, 0.04, 0.04, 0.1])
    summary = simulate.ReplicationSummary(
        true_beta=pop.beta_true.as_array(),
        mean_est=(beta_a + beta_b) / 2.0,
        sample_sd=np.full(5, 0.1),
        mean_se=(se_a + se_b) / 2.0,
        n_converged=2,
        replications=2,
        details=(
            {"rep": 0, "converged": True, "beta": beta_a, "se": se_a},
            {"rep": 1, "converged": True, "beta": beta_b, "se": se_b},
        ),
    )
    rows = simulate.panel_rows(pop, summary)
    assert rows["gene_column"] == "scale"
    np.testing.assert_allclose(rows["true"][4], 1.0, rtol=1e-15)
    np.testing.assert_allclose(rows["est"][4], (1.0 + 0.5) / 2.0, rtol=1e-14)
    np.testing.assert_allclose(
        rows["sd_hat"][4], (0.2 / 4.0 + 0.1 / (4.0 * 0.5)) / 2.0, rtol=1e-14
    )
    # the non-gene columns pass through untouched
    np.testing.assert_allclose(rows["est"][:4], ((beta_a + beta_b) / 2.0)[:4], rtol=1e-14)


def test_panel_rows_requires_details():
    pop = simulate.experiment_population(1, 1)
    summary = simulate.ReplicationSummary(
        true_beta=pop.beta_true.as_array(),
        mean_est=np.zeros(5),
        sample_sd=np.zeros(5),
        mean_se=np.zeros(5),
        n_converged=3,
        replications=3,
        details=None,
    )
    with pytest.raises(ParameterError, match="keep_details"):
        simulate.panel_rows(pop, summary)
