"""Data-generating processes and the replication harness.

The source population is described by a PopulationSpec: true parameters, a
gene law, and an environment law (by default a standard log-normal capped at
10, so draws are min(10, exp(Z)) with Z standard normal).  Case-control
samples arise by rejection: prospective units are drawn until each stratum
holds its design count.

Replication streams are derived as default_rng([seed, replication_index]),
which makes every replication reproducible in isolation and the aggregate
summaries independent of how replications are distributed over workers.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache

import numpy as np
from scipy.special import expit

from . import estimator as estimator_mod
from .data import CaseControlSample
from .errors import GxefitError, NumericError, ParameterError
from .genes import BernoulliGene, GeneModel, LaplaceGene
from .logistic import Observation, ParamVector, linear_predictor

#: Prospective units drawn per rejection-sampling chunk.  Fixed so a given
#: rng stream always produces the same sample.
CHUNK = 8192
#: Hard cap on prospective draws before the sampler gives up.
MAX_DRAWS = 10**9


@dataclasses.dataclass(frozen=True)
class TruncatedLogNormal:
    """Environment law: min(cap, exp(Z)) with Z standard normal.

    The parameters describe the underlying normal; capping censors the upper
    tail, leaving a point mass at the cap.
    """

    cap: float = 10.0

    def __post_init__(self):
        if not (np.isfinite(self.cap) and self.cap > 0.0):
            raise ParameterError(f"cap must be positive, got {self.cap!r}")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.minimum(self.cap, rng.lognormal(0.0, 1.0, size))

    def quadrature(self):
        """Nodes and weights integrating smooth functions against the law.

        Gauss-Legendre panels cover the continuous part below the cap; the
        censored upper tail contributes one atom at the cap itself.
        """
        log_cap = math.log(self.cap)
        lo = -10.0  # normal mass below is ~8e-24, far under the rule's error
        panels = 6
        per_panel = 80
        x, w = np.polynomial.legendre.leggauss(per_panel)
        edges = np.linspace(lo, log_cap, panels + 1)
        z_nodes, z_weights = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            half = 0.5 * (b - a)
            z = a + half * (x + 1.0)
            z_nodes.append(z)
            z_weights.append(half * w * np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi))
        atom = 0.5 * math.erfc(log_cap / math.sqrt(2.0))
        nodes = np.concatenate([np.exp(np.concatenate(z_nodes)), [self.cap]])
        weights = np.concatenate([np.concatenate(z_weights), [atom]])
        return nodes, weights


@dataclasses.dataclass(frozen=True)
class PopulationSpec:
    """True parameters plus the exposure laws of the source population.

    The gene law's parameter always follows beta_true.beta_4; the env object
    only needs a ``sample(rng, size)`` method (a ``quadrature()`` method, as
    on TruncatedLogNormal, additionally enables the deterministic
    population-rate computations).
    """

    beta_true: ParamVector
    gene: GeneModel
    env: object = TruncatedLogNormal()

    def __post_init__(self):
        object.__setattr__(self, "gene", self.gene.with_beta4(self.beta_true.beta_4))


def sample_units(pop: PopulationSpec, n: int, rng: np.random.Generator):
    """n prospective units (d, g, e) from the source population.

    RNG call order is fixed (gene draws, then environment draws, then the
    disease uniforms) and is part of the reproducibility contract.
    """
    g = pop.gene.sample(rng, n)
    e = np.asarray(pop.env.sample(rng, n), dtype=float)
    risk = expit(linear_predictor(pop.beta_true, g, e))
    d = (rng.random(n) < risk).astype(np.int64)
    return d, g, e


def sample_unit(pop: PopulationSpec, rng: np.random.Generator) -> Observation:
    """One prospective unit."""
    d, g, e = sample_units(pop, 1, rng)
    return Observation(d=int(d[0]), g=float(g[0]), e=float(e[0]))


def sample_case_control(
    pop: PopulationSpec, n_cases: int, n_controls: int, rng: np.random.Generator
) -> CaseControlSample:
    """Rejection-sample prospective units until both strata are full.

    Within each stratum the kept records are i.i.d. draws from the
    stratum-conditional law.  Cases come first in the returned sample.
    Aborts once MAX_DRAWS prospective units have been spent.
    """
    if n_cases < 1 or n_controls < 1:
        raise ParameterError("both stratum counts must be at least 1")
    need = {1: n_cases, 0: n_controls}
    kept = {1: [], 0: []}
    drawn = 0
    while need[1] > 0 or need[0] > 0:
        if drawn >= MAX_DRAWS:
            raise NumericError(
                f"case-control sampler spent {drawn} prospective draws without "
                f"filling the design ({need[1]} cases, {need[0]} controls still "
                "missing); the disease model is too extreme for this design"
            )
        d, g, e = sample_units(pop, CHUNK, rng)
        drawn += CHUNK
        for status in (1, 0):
            if need[status] > 0:
                hit = d == status
                take = min(need[status], int(np.count_nonzero(hit)))
                if take:
                    rows = np.flatnonzero(hit)[:take]
                    kept[status].append((g[rows], e[rows]))
                    need[status] -= take
    g1 = np.concatenate([part[0] for part in kept[1]])
    e1 = np.concatenate([part[1] for part in kept[1]])
    g0 = np.concatenate([part[0] for part in kept[0]])
    e0 = np.concatenate([part[1] for part in kept[0]])
    return CaseControlSample(
        d=np.concatenate([np.ones(n_cases, dtype=np.int64), np.zeros(n_controls, dtype=np.int64)]),
        g=np.concatenate([g1, g0]),
        e=np.concatenate([e1, e0]),
    )


def sample_hypothetical(
    pop: PopulationSpec, n_total: int, case_share: float, rng: np.random.Generator
) -> CaseControlSample:
    """Sample from the hypothetical population with the given case share.

    The case count is binomial rather than fixed, which is the i.i.d. view
    of the same design; given the counts, strata are drawn exactly as in
    sample_case_control.
    """
    if not 0.0 < case_share < 1.0:
        raise ParameterError("case_share must lie in (0, 1)")
    n_cases = int(rng.binomial(n_total, case_share))
    n_controls = n_total - n_cases
    return sample_case_control(pop, n_cases, n_controls, rng)


def population_disease_rate(pop: PopulationSpec) -> float:
    """Deterministic marginal disease probability of the source population.

    Integrates the disease risk against the gene and environment laws; the
    env law must expose quadrature() (TruncatedLogNormal does).
    """
    if not hasattr(pop.env, "quadrature"):
        raise ParameterError("population_disease_rate needs an env law with quadrature()")
    gq = pop.gene.quadrature()
    e_nodes, e_weights = pop.env.quadrature()
    m = linear_predictor(pop.beta_true, gq.nodes[:, None], e_nodes[None, :])
    return float(gq.weights @ expit(m) @ e_weights)


def population_alpha(pop: PopulationSpec) -> float:
    """True control/case odds p0/p1 of the source population."""
    p1 = population_disease_rate(pop)
    return (1.0 - p1) / p1


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    """Design of one replication study."""

    n_cases: int = 500
    n_controls: int = 500
    replications: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.n_cases < 1 or self.n_controls < 1:
            raise ParameterError("stratum counts must be at least 1")
        if self.replications < 1:
            raise ParameterError("replications must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must be an unsigned 64-bit integer")


@dataclasses.dataclass(frozen=True)
class ReplicationSummary:
    """Aggregate of one replication study.

    sample_sd is None (flagged, not zero) when fewer than two replications
    converged.  details holds the per-replication records when requested.
    """

    true_beta: np.ndarray
    mean_est: np.ndarray
    sample_sd: np.ndarray | None
    mean_se: np.ndarray
    n_converged: int
    replications: int
    details: tuple | None = None


def _replicate(pop: PopulationSpec, exp: ExperimentSpec, config, rep: int) -> dict:
    rng = np.random.default_rng([exp.seed, rep])
    try:
        sample = sample_case_control(pop, exp.n_cases, exp.n_controls, rng)
        result = estimator_mod.fit(sample, pop.gene, config)
    except GxefitError as exc:
        return {"rep": rep, "converged": False, "error": str(exc)}
    return {
        "rep": rep,
        "converged": bool(result.converged),
        "beta": result.beta_hat.as_array(),
        "se": result.se,
        "eq_residual": result.eq_residual,
        "p1": result.p_hat.p1,
        "newton_iters": result.newton_iters,
        "outer_iters": result.outer_iters,
    }


def _replicate_packed(args):
    return _replicate(*args)


def run_experiment(
    pop: PopulationSpec,
    exp: ExperimentSpec,
    config: estimator_mod.FitConfig | None = None,
    *,
    workers: int = 1,
    keep_details: bool = False,
) -> ReplicationSummary:
    """Run the replications and summarize the converged ones.

    Non-converged replications are excluded from the summary but counted;
    more than 10% of them is treated as a harness failure.  Results do not
    depend on the worker count: every replication owns the stream
    default_rng([seed, index]) and the reduction runs in index order.
    """
    config = config if config is not None else estimator_mod.FitConfig()
    tasks = [(pop, exp, config, rep) for rep in range(exp.replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_replicate_packed, tasks, chunksize=8))
    else:
        records = [_replicate(*task) for task in tasks]

    converged = [r for r in records if r["converged"]]
    n_failed = exp.replications - len(converged)
    if n_failed > 0.1 * exp.replications:
        raise NumericError(
            f"{n_failed} of {exp.replications} replications failed to converge; "
            "the study design or the solver settings need attention"
        )
    estimates = np.stack([r["beta"] for r in converged])
    ses = np.stack([r["se"] for r in converged])
    return ReplicationSummary(
        true_beta=pop.beta_true.as_array(),
        mean_est=estimates.mean(axis=0),
        sample_sd=estimates.std(axis=0, ddof=1) if len(converged) >= 2 else None,
        mean_se=ses.mean(axis=0),
        n_converged=len(converged),
        replications=exp.replications,
        details=tuple(records) if keep_details else None,
    )


#: The four benchmark populations: two gene laws, each with a lower- and a
#: higher-dispersion gene parameter, all tuned to a ~5% disease rate.
PANEL_KEYS = ((1, 1), (1, 2), (2, 1), (2, 2))


@lru_cache(maxsize=None)
def experiment_population(experiment: int, param_set: int) -> PopulationSpec:
    """Benchmark population for (experiment, param_set) in {1,2} x {1,2}.

    Experiment 1 uses the Bernoulli gene (carrier frequency 0.065 or 0.26),
    experiment 2 the Laplace gene with scale 0.3 or 1.0, i.e. beta_4
    (variance) 0.18 or 2.0; slopes are shared and the intercept keeps the
    disease rate near 5% in all four panels.
    """
    table = {
        (1, 1): (ParamVector(-3.2, 0.26, 0.1, 0.3, 0.065), BernoulliGene(0.065)),
        (1, 2): (ParamVector(-3.45, 0.26, 0.1, 0.3, 0.26), BernoulliGene(0.26)),
        (2, 1): (ParamVector(-3.2, 0.26, 0.1, 0.3, 0.18), LaplaceGene(0.18)),
        (2, 2): (ParamVector(-3.73, 0.26, 0.1, 0.3, 2.0), LaplaceGene(2.0)),
    }
    try:
        beta, gene = table[(experiment, param_set)]
    except KeyError:
        raise ParameterError(
            f"no benchmark population for experiment={experiment!r}, set={param_set!r}"
        ) from None
    return PopulationSpec(beta_true=beta, gene=gene, env=TruncatedLogNormal())


def panel_rows(pop: PopulationSpec, summary: ReplicationSummary) -> dict:
    """Benchmark-table rows (true/est/sd/sd_hat) for one panel.

    Bernoulli panels report the gene column as the carrier frequency, which
    is beta_4 itself.  Laplace panels report it in scale units
    b = sqrt(beta_4 / 2): the scale estimate and its delta-method standard
    error are formed per replication, so the est, sd, and sd_hat rows stay
    mutually consistent.  Requires a summary built with keep_details=True.
    """
    if summary.details is None:
        raise ParameterError("panel_rows needs a summary built with keep_details=True")
    recs = [r for r in summary.details if r.get("converged")]
    if len(recs) < 2:
        raise NumericError("panel rows need at least two converged replications")
    est = np.stack([r["beta"] for r in recs])
    se = np.stack([r["se"] for r in recs])
    true = pop.beta_true.as_array()
    if pop.gene.kind == "laplace":
        scale_hat = np.sqrt(est[:, 4] / 2.0)
        se = se.copy()
        se[:, 4] = se[:, 4] / (4.0 * scale_hat)
        est = est.copy()
        est[:, 4] = scale_hat
        true[4] = math.sqrt(true[4] / 2.0)
        gene_column = "scale"
    else:
        gene_column = "frequency"
    return {
        "gene_column": gene_column,
        "true": true,
        "est": est.mean(axis=0),
        "sd": est.std(axis=0, ddof=1),
        "sd_hat": se.mean(axis=0),
    }


def benchmark_panels(
    replications: int = 200,
    seed: int = 0,
    n_cases: int = 500,
    n_controls: int = 500,
    config: estimator_mod.FitConfig | None = None,
    *,
    workers: int = 1,
) -> list[dict]:
    """Run all four benchmark panels; panel k uses seed + k.

    Returns one dict per panel with the keys experiment, set, gene, rows
    (the true/est/sd/sd_hat table rows from panel_rows), and summary (the
    ReplicationSummary, including per-replication details).
    """
    panels = []
    for offset, (experiment, param_set) in enumerate(PANEL_KEYS, start=1):
        pop = experiment_population(experiment, param_set)
        exp = ExperimentSpec(
            n_cases=n_cases, n_controls=n_controls, replications=replications, seed=seed + offset
        )
        summary = run_experiment(pop, exp, config, workers=workers, keep_details=True)
        panels.append(
            {
                "experiment": experiment,
                "set": param_set,
                "gene": pop.gene.kind,
                "rows": panel_rows(pop, summary),
                "summary": summary,
            }
        )
    return panels
