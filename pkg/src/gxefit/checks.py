"""Numerical invariant battery behind the ``check`` command.

Each check measures a slack (how far the build is from violating the
invariant) and compares it against a fixed threshold.  Thresholds are part
of the build contract: a pristine build passes all of them, and a build with
a sign or weighting mistake in the score machinery fails the cross-check
and derivative-identity entries.

All randomness is drawn from fixed seeds so the battery is deterministic.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import estimator as estimator_mod
from . import score as score_mod
from . import simulate as simulate_mod
from .data import CaseControlSample
from .genes import BernoulliGene, LaplaceGene
from .logistic import ParamVector


@dataclasses.dataclass(frozen=True)
class CheckResult:
    """One battery entry: measured value, its threshold, and the verdict."""

    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str


def _random_config(rng, kind: str):
    """One random (beta, dist, sample, marg) tuple for cross-checks.

    Parameters are drawn wide enough to exercise both tails but stay in the
    region where a case-control study makes sense.
    """
    beta = ParamVector(
        float(rng.uniform(-4.0, -1.0)),
        float(rng.uniform(-0.6, 0.6)),
        float(rng.uniform(-0.4, 0.4)),
        float(rng.uniform(-0.5, 0.5)),
        float(rng.uniform(0.05, 0.95)) if kind == "bernoulli" else float(rng.uniform(0.1, 2.0)),
    )
    dist = BernoulliGene(beta.beta_4) if kind == "bernoulli" else LaplaceGene(beta.beta_4)
    n = 50
    g = dist.sample(rng, n)
    e = np.minimum(10.0, rng.lognormal(0.0, 1.0, n))
    d = np.zeros(n, dtype=np.int64)
    d[: n // 2] = 1
    rng.shuffle(d)
    d[0], d[1] = 0, 1  # both strata always present
    sample = CaseControlSample(d=d, g=g, e=e)
    marg = score_mod.MarginalDisease.from_p1(float(rng.uniform(0.01, 0.3)))
    return beta, dist, sample, marg


def _gene_grid():
    return [BernoulliGene(v) for v in (0.05, 0.065, 0.26, 0.5, 0.9)] + [
        LaplaceGene(v) for v in (0.1, 0.3, 1.0, 4.0)
    ]


def check_normalization() -> CheckResult:
    value = max(abs(dist.integrate(lambda g: np.ones_like(g)) - 1.0) for dist in _gene_grid())
    return CheckResult(
        name="gene_normalization",
        passed=value < 1e-10,
        value=float(value),
        tolerance=1e-10,
        detail="max |integral of density - 1| over both gene families",
    )


def check_quadrature_variance() -> CheckResult:
    value = max(
        abs(dist.integrate(lambda g: g * g) - dist.beta4) for dist in _gene_grid() if dist.kind == "laplace"
    )
    return CheckResult(
        name="laplace_variance_quadrature",
        passed=value < 1e-8,
        value=float(value),
        tolerance=1e-8,
        detail="max |integral of g^2 - variance| over Laplace laws",
    )


def check_score_zero_mean() -> CheckResult:
    value = max(abs(dist.integrate(dist.score_beta4)) for dist in _gene_grid())
    return CheckResult(
        name="gene_score_zero_mean",
        passed=value < 1e-8,
        value=float(value),
        tolerance=1e-8,
        detail="max |mean gene score under its own law|",
    )


def check_score_finite_difference() -> CheckResult:
    rng = np.random.default_rng(11)
    worst = 0.0
    for dist in _gene_grid():
        g = dist.sample(rng, 50)
        h = 1e-6 * max(1.0, dist.beta4)
        up = np.log(dist.with_beta4(dist.beta4 + h).density(g))
        down = np.log(dist.with_beta4(dist.beta4 - h).density(g))
        fd = (up - down) / (2.0 * h)
        worst = max(worst, float(np.max(np.abs(fd - dist.score_beta4(g)))))
    return CheckResult(
        name="gene_score_finite_difference",
        passed=worst < 1e-5,
        value=worst,
        tolerance=1e-5,
        detail="max |analytic gene score - central difference of log density|",
    )


def check_two_term_sums() -> CheckResult:
    """Bernoulli gene integrals must equal their literal two-term sums
    bit for bit (composed from the public density/status-probability ops)."""
    from .logistic import disease_prob, raw_score
    from .logistic import Observation

    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        beta, dist, sample, _ = _random_config(rng, "bernoulli")
        u1_0, u1_1, u2_0, u2_1 = score_mod.gene_integrals(beta, dist, sample.e, sample.n0, sample.n1)
        q = dist.with_beta4(beta.beta_4).quadrature()
        for i, e in enumerate(sample.e[:10]):
            for d_status, u1, u2 in ((0, u1_0, u2_0), (1, u1_1, u2_1)):
                n_d = sample.n0 if d_status == 0 else sample.n1
                h = [disease_prob(beta, d_status, g, float(e)) for g in (0.0, 1.0)]
                lit1 = n_d * (q.weights[0] * h[0] + q.weights[1] * h[1])
                worst = max(worst, abs(lit1 - u1[i]))
                s = [raw_score(beta, dist, Observation(d=d_status, g=g, e=float(e))) for g in (0.0, 1.0)]
                lit2 = n_d * (q.weights[0] * (s[0] * h[0]) + q.weights[1] * (s[1] * h[1]))
                worst = max(worst, float(np.max(np.abs(lit2 - u2[:, i]))))
    return CheckResult(
        name="bernoulli_two_term_sums",
        passed=worst == 0.0,
        value=worst,
        tolerance=0.0,
        detail="max |vectorized gene integral - literal two-term sum| (must be exactly 0)",
    )


def check_weight_complement() -> CheckResult:
    rng = np.random.default_rng(17)
    worst = 0.0
    for kind in ("bernoulli", "laplace"):
        beta, dist, sample, marg = _random_config(rng, kind)
        u1_0, u1_1, _, _ = score_mod.gene_integrals(beta, dist, sample.e, sample.n0, sample.n1)
        w0, w1 = score_mod.posterior_weights(u1_0, u1_1, marg)
        worst = max(worst, float(np.max(np.abs(w0 + w1 - 1.0))))
    return CheckResult(
        name="weight_complement",
        passed=worst == 0.0,
        value=worst,
        tolerance=0.0,
        detail="max |w0 + w1 - 1| (complement is exact by construction)",
    )


def check_closed_form(n_draws: int = 400) -> CheckResult:
    rng = np.random.default_rng(23)
    worst = 0.0
    for trial in range(n_draws):
        kind = "bernoulli" if trial % 2 == 0 else "laplace"
        beta, dist, sample, marg = _random_config(rng, kind)
        cache = score_mod.build_cache(beta, dist, sample)
        moments = score_mod.moment_set(beta, dist, sample, marg, cache=cache)
        direct = score_mod.efficient_score(beta, dist, sample, marg, moments, cache=cache)
        closed = score_mod.closed_form_score(beta, dist, sample, marg, moments, cache=cache)
        worst = max(worst, float(np.max(np.abs(direct - closed))))
    return CheckResult(
        name="closed_form_equivalence",
        passed=worst < 1e-10,
        value=worst,
        tolerance=1e-10,
        detail="max |orthogonalized score - closed form| over random configurations",
    )


def check_moment_factor_identity() -> CheckResult:
    rng = np.random.default_rng(29)
    worst = 0.0
    for trial in range(200):
        kind = "bernoulli" if trial % 2 == 0 else "laplace"
        beta, dist, sample, marg = _random_config(rng, kind)
        moments = score_mod.moment_set(beta, dist, sample, marg)
        alt = (moments.ese_d0 - moments.b0) / (1.0 - moments.what0)
        worst = max(worst, float(np.max(np.abs(moments.a_diff - alt))))
    return CheckResult(
        name="moment_factor_identity",
        passed=worst < 1e-10,
        value=worst,
        tolerance=1e-10,
        detail="max |a_diff - (ese_d0 - b0)/(1 - what0)| over random configurations",
    )


def check_marginal_monotonicity() -> CheckResult:
    pop = simulate_mod.experiment_population(1, 2)
    rng = np.random.default_rng(31)
    sample = simulate_mod.sample_case_control(pop, 200, 200, rng)
    u1_0, u1_1, _, _ = score_mod.gene_integrals(pop.beta_true, pop.gene, sample.e, sample.n0, sample.n1)
    grid = np.linspace(0.001, 0.999, 100)
    values = []
    for p1 in grid:
        alpha = (1.0 - p1) / p1
        values.append(float(np.sum((alpha * u1_1) / (u1_0 + alpha * u1_1))))
    diffs = np.diff(values)
    value = float(diffs.max())
    return CheckResult(
        name="marginal_monotonicity",
        passed=value < 0.0,
        value=value,
        tolerance=0.0,
        detail="largest forward difference of the case-count objective on a p grid (must be negative)",
    )


def check_root_property() -> CheckResult:
    pop = simulate_mod.experiment_population(1, 2)
    rng = np.random.default_rng(37)
    sample = simulate_mod.sample_case_control(pop, 300, 300, rng)
    result = estimator_mod.fit(sample, pop.gene)
    residual = float(
        np.max(
            np.abs(
                score_mod.estimating_function(
                    result.beta_hat, pop.gene, sample, result.p_hat, result.moments.a_diff
                )
            )
        )
    )
    passed = result.converged and residual < 1e-8
    return CheckResult(
        name="root_property",
        passed=passed,
        value=residual,
        tolerance=1e-8,
        detail="max-norm of the mean plug-in score at the fitted parameters",
    )


def check_alpha_derivative(kind: str) -> CheckResult:
    experiment = 1 if kind == "bernoulli" else 2
    pop = simulate_mod.experiment_population(experiment, 2)
    estimate, se = score_mod.dalpha_identity_test(
        pop.beta_true, pop.gene, pop, draws=100_000, seed=41 + experiment
    )
    ratio = float(np.max(np.abs(estimate / se)))
    return CheckResult(
        name=f"alpha_derivative_zero_mean_{kind}",
        passed=ratio < 3.0,
        value=ratio,
        tolerance=3.0,
        detail="max |component| of the mean score alpha-derivative, in MC standard errors",
    )


def run_battery() -> list[CheckResult]:
    """Run every check in a fixed order."""
    return [
        check_normalization(),
        check_quadrature_variance(),
        check_score_zero_mean(),
        check_score_finite_difference(),
        check_two_term_sums(),
        check_weight_complement(),
        check_closed_form(),
        check_moment_factor_identity(),
        check_marginal_monotonicity(),
        check_root_property(),
        check_alpha_derivative("bernoulli"),
        check_alpha_derivative("laplace"),
    ]
