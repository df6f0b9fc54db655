"""Disease-risk model and per-record score.

The disease indicator follows a logistic law in the gene, the environment,
and their product:

    logit P(D=1 | g, e) = m(g, e) = beta_c + beta_1 g + beta_2 e + beta_3 g e

``disease_prob`` evaluates H(d, g, e) = exp(d m) / (1 + exp m), the
probability of the observed status, and ``raw_score`` evaluates the full
parametric score of one record: the four risk entries share the residual
factor d - 1 + 1/(1 + e^m), and the fifth entry is the gene-law score.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.special import expit

from .errors import ParameterError, SupportError
from .genes import GeneModel

PARAM_NAMES = ("beta_c", "beta_1", "beta_2", "beta_3", "beta_4")


@dataclasses.dataclass(frozen=True)
class ParamVector:
    """The five model parameters.

    beta_c is the logistic intercept, beta_1/beta_2/beta_3 the gene, the
    environment, and the interaction slopes, and beta_4 the gene-law
    parameter (carrier frequency or variance depending on the law).
    """

    beta_c: float
    beta_1: float
    beta_2: float
    beta_3: float
    beta_4: float

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.beta_c, self.beta_1, self.beta_2, self.beta_3, self.beta_4])

    @classmethod
    def from_array(cls, values) -> "ParamVector":
        values = np.asarray(values, dtype=float)
        if values.shape != (5,):
            raise ParameterError(f"parameter vector must have 5 entries, got shape {values.shape}")
        return cls(*(float(v) for v in values))


@dataclasses.dataclass(frozen=True)
class Observation:
    """One record: disease status d in {0, 1}, gene g, environment e."""

    d: int
    g: float
    e: float

    def __post_init__(self):
        if self.d not in (0, 1):
            raise SupportError(f"disease status must be 0 or 1, got {self.d!r}")
        if not (np.isfinite(self.g) and np.isfinite(self.e)):
            raise SupportError("gene and environment values must be finite")


def linear_predictor(beta: ParamVector, g, e):
    """m(g, e); accepts scalars or broadcastable arrays."""
    return beta.beta_c + beta.beta_1 * g + beta.beta_2 * e + beta.beta_3 * (g * e)


def disease_prob(beta: ParamVector, d: int, g, e):
    """H(d, g, e) = exp(d m)/(1 + exp m), evaluated with the stable sign-split
    logistic so large |m| cannot overflow."""
    if d not in (0, 1):
        raise SupportError(f"disease status must be 0 or 1, got {d!r}")
    m = linear_predictor(beta, g, e)
    return expit(m) if d == 1 else expit(-m)


def raw_score(beta: ParamVector, dist: GeneModel, obs: Observation) -> np.ndarray:
    """Full parametric score of one record, a length-5 vector."""
    out = raw_score_matrix(beta, dist, np.array([float(obs.d)]), np.array([obs.g]), np.array([obs.e]))
    return out[:, 0]


def raw_score_matrix(beta: ParamVector, dist: GeneModel, d, g, e) -> np.ndarray:
    """Scores of many records at once, shaped (5, n).

    Row order matches PARAM_NAMES.  The residual factor is coded exactly as
    d - 1 + 1/(1 + e^m); the reciprocal is expit(-m).  The dist argument
    supplies the gene-law family; its parameter is taken from beta.
    """
    dist = dist.with_beta4(beta.beta_4)
    d = np.asarray(d, dtype=float)
    g = np.asarray(g, dtype=float)
    e = np.asarray(e, dtype=float)
    m = linear_predictor(beta, g, e)
    resid = d - 1.0 + expit(-m)
    return np.stack([resid, g * resid, e * resid, (g * e) * resid, dist.score_beta4(g)])
