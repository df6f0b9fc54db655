"""Semiparametric efficient estimation for case-control gene-environment studies.

The package fits a logistic disease model with a gene-environment
interaction to case-control data, treating the environment distribution as
completely unknown while exploiting independence between the gene and the
environment in the source population.  The gene law is parametric (Bernoulli
carrier indicator or zero-mean Laplace), the environment law is never
estimated, and inference runs through an orthogonalized per-record score.
"""

__version__ = "0.1.0"

from .data import CaseControlSample, load_csv, write_csv
from .errors import (
    DataError,
    GxefitError,
    NumericError,
    ParameterError,
    SupportError,
)
from .estimator import (
    FitConfig,
    FitResult,
    estimate_variance,
    fit,
    fit_split,
    initial_beta,
    newton_solve,
)
from .genes import (
    BernoulliGene,
    GeneModel,
    GeneQuadrature,
    LaplaceGene,
    gene_model,
)
from .logistic import (
    PARAM_NAMES,
    Observation,
    ParamVector,
    disease_prob,
    linear_predictor,
    raw_score,
    raw_score_matrix,
)
from .score import (
    MarginalDisease,
    MomentSet,
    ScoreCache,
    build_cache,
    closed_form_score,
    cond_mean_score,
    dalpha_identity_test,
    efficient_score,
    estimating_function,
    gene_integrals,
    moment_set,
    posterior_weights,
    solve_marginal,
)
from .simulate import (
    ExperimentSpec,
    PopulationSpec,
    ReplicationSummary,
    TruncatedLogNormal,
    benchmark_panels,
    experiment_population,
    panel_rows,
    population_alpha,
    population_disease_rate,
    run_experiment,
    sample_case_control,
    sample_hypothetical,
    sample_unit,
    sample_units,
)

__all__ = [
    "__version__",
    "BernoulliGene",
    "CaseControlSample",
    "DataError",
    "ExperimentSpec",
    "FitConfig",
    "FitResult",
    "GeneModel",
    "GeneQuadrature",
    "GxefitError",
    "LaplaceGene",
    "MarginalDisease",
    "MomentSet",
    "NumericError",
    "Observation",
    "PARAM_NAMES",
    "ParamVector",
    "ParameterError",
    "PopulationSpec",
    "ReplicationSummary",
    "ScoreCache",
    "SupportError",
    "TruncatedLogNormal",
    "benchmark_panels",
    "build_cache",
    "closed_form_score",
    "cond_mean_score",
    "dalpha_identity_test",
    "disease_prob",
    "efficient_score",
    "estimate_variance",
    "estimating_function",
    "experiment_population",
    "fit",
    "fit_split",
    "gene_integrals",
    "gene_model",
    "initial_beta",
    "linear_predictor",
    "load_csv",
    "moment_set",
    "newton_solve",
    "population_alpha",
    "population_disease_rate",
    "posterior_weights",
    "raw_score",
    "raw_score_matrix",
    "panel_rows",
    "run_experiment",
    "sample_case_control",
    "sample_hypothetical",
    "sample_unit",
    "sample_units",
    "solve_marginal",
    "write_csv",
]
