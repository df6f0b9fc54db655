"""Efficient-score machinery for case-control samples.

Exploiting independence of the gene and the environment exposure, the
estimator works with an orthogonalized per-record score: the raw parametric
score, minus its conditional mean given the observed environment, plus a
stratum-weighted correction that removes the component the unknown
environment law and the retrospective sampling would otherwise leak in.

Everything here is written for whole samples at once: per-record quantities
come back as arrays aligned with the sample, vectors of length 5 stacked as
(5, n) matrices.  The gene integrals reduce over the rows of
(node x record) tables built from the gene quadrature, so all reductions are
ordered, deterministic pairwise sums.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.special import expit

from .data import CaseControlSample
from .errors import NumericError, ParameterError
from .genes import GeneModel
from .logistic import ParamVector, linear_predictor, raw_score_matrix

#: Bisection bracket for the marginal disease rate.
MARGINAL_BRACKET = (1e-8, 1.0 - 1e-8)
#: Residual tolerance of the marginal solver, per observation.
MARGINAL_TOL = 1e-8


@dataclasses.dataclass(frozen=True)
class MarginalDisease:
    """Marginal disease law of the hypothetical source population.

    alpha = p0/p1 is stored at construction, never re-derived downstream, so
    every consumer sees exactly the same odds.
    """

    p0: float
    p1: float
    alpha: float

    def __post_init__(self):
        if not (np.isfinite(self.p1) and 0.0 < self.p1 < 1.0):
            raise ParameterError(f"p1 must lie in (0, 1), got {self.p1!r}")
        if not (np.isfinite(self.p0) and 0.0 < self.p0 < 1.0):
            raise ParameterError(f"p0 must lie in (0, 1), got {self.p0!r}")
        if self.alpha != self.p0 / self.p1:
            raise ParameterError("alpha must equal p0/p1 exactly")

    @classmethod
    def from_p1(cls, p1: float) -> "MarginalDisease":
        p1 = float(p1)
        p0 = 1.0 - p1
        return cls(p0=p0, p1=p1, alpha=p0 / p1)

    @classmethod
    def from_alpha(cls, alpha: float) -> "MarginalDisease":
        alpha = float(alpha)
        p1 = 1.0 / (1.0 + alpha)
        p0 = 1.0 - p1
        return cls(p0=p0, p1=p1, alpha=p0 / p1)


@dataclasses.dataclass(frozen=True)
class ScoreCache:
    """Per-record ingredients at one parameter value.

    u1_d[i] is the gene-integrated probability weight of stratum d at the
    i-th record's environment value, scaled by the stratum count; u2_d[:, i]
    is the matching raw-score-weighted integral.  raw[:, i] is the raw score
    of record i itself.  A cache is only valid at the (beta, dist, sample)
    it was built from.
    """

    u1_0: np.ndarray
    u1_1: np.ndarray
    u2_0: np.ndarray
    u2_1: np.ndarray
    raw: np.ndarray


def gene_integrals(beta: ParamVector, dist: GeneModel, e, n0: int, n1: int):
    """Gene-integrated stratum weights at each environment value.

    Returns (u1_0, u1_1, u2_0, u2_1) where, with q the gene law and H the
    status probability,

        u1_d[i] = n_d * Int q(g) H(d, g, e_i) dg
        u2_d[:, i] = n_d * Int S(d, g, e_i) q(g) H(d, g, e_i) dg

    and S is the raw per-record score.  The integrals keep the same
    floating-point composition as raw_score/disease_prob, so for a discrete
    gene law each entry equals the literal term-by-term sum bit for bit.

    The dist argument supplies the gene-law family; its parameter is always
    taken from beta so the two can never disagree.
    """
    dist = dist.with_beta4(beta.beta_4)
    e = np.asarray(e, dtype=float)
    quad = dist.quadrature()
    gn = quad.nodes[:, None]
    wq = quad.weights[:, None]
    ecol = e[None, :]
    m = linear_predictor(beta, gn, ecol)
    h1 = expit(m)
    h0 = expit(-m)
    s4 = dist.score_beta4(quad.nodes)[:, None]
    ge = gn * ecol

    u1_0 = n0 * np.sum(wq * h0, axis=0)
    u1_1 = n1 * np.sum(wq * h1, axis=0)

    def score_rows(resid, h, n_d):
        rows = [
            np.sum(wq * (resid * h), axis=0),
            np.sum(wq * ((gn * resid) * h), axis=0),
            np.sum(wq * ((ecol * resid) * h), axis=0),
            np.sum(wq * ((ge * resid) * h), axis=0),
            np.sum(wq * (s4 * h), axis=0),
        ]
        return n_d * np.stack(rows)

    # Residual factors d - 1 + 1/(1 + e^m) at d = 0 and d = 1.
    u2_0 = score_rows(h0 - 1.0, h0, n0)
    u2_1 = score_rows(h0, h1, n1)
    return u1_0, u1_1, u2_0, u2_1


def build_cache(beta: ParamVector, dist: GeneModel, sample: CaseControlSample) -> ScoreCache:
    """Evaluate every per-record ingredient of the efficient score once."""
    u1_0, u1_1, u2_0, u2_1 = gene_integrals(beta, dist, sample.e, sample.n0, sample.n1)
    raw = raw_score_matrix(beta, dist, sample.d, sample.g, sample.e)
    return ScoreCache(u1_0=u1_0, u1_1=u1_1, u2_0=u2_0, u2_1=u2_1, raw=raw)


def posterior_weights(u1_0, u1_1, marg: MarginalDisease):
    """Stratum membership weights given the environment value.

    w0 is the control share, w1 its exact complement (w0 + w1 = 1 exactly by
    construction).
    """
    denom = u1_0 + marg.alpha * u1_1
    if not np.isfinite(denom).all() or (denom <= 0.0).any():
        raise NumericError("degenerate stratum weights: zero or non-finite denominator")
    w0 = u1_0 / denom
    return w0, 1.0 - w0


def solve_marginal(beta: ParamVector, dist: GeneModel, sample: CaseControlSample, *, u1=None) -> MarginalDisease:
    """Solve for the marginal disease rate of the source population.

    The defining equation matches the expected case count under the
    posterior stratum weights to the design count: sum_i w1(e_i; p) = n1.
    The objective is strictly decreasing in p, so a guarded bisection on a
    fixed bracket is exact enough and cannot step outside (0, 1).
    """
    if sample.n0 < 1 or sample.n1 < 1:
        raise NumericError("marginal solver needs at least one case and one control")
    if u1 is None:
        dist = dist.with_beta4(beta.beta_4)
        e = np.asarray(sample.e, dtype=float)
        quad = dist.quadrature()
        m = linear_predictor(beta, quad.nodes[:, None], e[None, :])
        wq = quad.weights[:, None]
        u1_0 = sample.n0 * np.sum(wq * expit(-m), axis=0)
        u1_1 = sample.n1 * np.sum(wq * expit(m), axis=0)
    else:
        u1_0, u1_1 = u1

    n1 = float(sample.n1)

    def objective(p1):
        alpha = (1.0 - p1) / p1
        w1 = (alpha * u1_1) / (u1_0 + alpha * u1_1)
        return float(np.sum(w1)) - n1

    lo, hi = MARGINAL_BRACKET
    f_lo = objective(lo)
    f_hi = objective(hi)
    if f_lo == 0.0:
        return MarginalDisease.from_p1(lo)
    if f_hi == 0.0:
        return MarginalDisease.from_p1(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise NumericError(
            f"marginal equation has no sign change on ({lo}, {hi}): f(lo)={f_lo:.3g}, f(hi)={f_hi:.3g}"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = objective(mid)
        if f_mid == 0.0:
            lo = hi = mid
            break
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo <= 1e-15:
            break
    p1 = 0.5 * (lo + hi)
    residual = abs(objective(p1))
    if residual >= MARGINAL_TOL * sample.n:
        raise NumericError(f"marginal solver residual {residual:.3g} exceeds tolerance")
    return MarginalDisease.from_p1(p1)


def cond_mean_score(u1_0, u1_1, u2_0, u2_1, marg: MarginalDisease) -> np.ndarray:
    """Conditional mean of the raw score given the environment value, under
    the retrospective sampling law, shaped (5, n)."""
    denom = u1_0 + marg.alpha * u1_1
    return (u2_0 + marg.alpha * u2_1) / denom[None, :]


@dataclasses.dataclass(frozen=True)
class MomentSet:
    """Sample moment corrections entering the efficient score.

    b0 and b1 are the stratum-conditional raw-score means; what0 is the mean
    control weight within the control stratum; ese_d0 the control-stratum
    mean of the conditional score mean; c_diff and a_diff the derived
    correction differences (a_diff multiplies the stratum weight inside the
    final score).
    """

    b0: np.ndarray
    b1: np.ndarray
    what0: float
    ese_d0: np.ndarray
    c_diff: np.ndarray
    a_diff: np.ndarray


def moment_set(
    beta: ParamVector,
    dist: GeneModel,
    sample: CaseControlSample,
    marg: MarginalDisease,
    *,
    cache: ScoreCache | None = None,
) -> MomentSet:
    """Plug-in moment corrections, averaged over the full environment sample.

    Every average runs over all records (cases and controls alike); the
    stratum conditioning enters through the u1 weights, not through row
    selection.
    """
    if cache is None:
        cache = build_cache(beta, dist, sample)
    denom = cache.u1_0 + marg.alpha * cache.u1_1
    if not np.isfinite(denom).all() or (denom <= 0.0).any():
        raise NumericError("degenerate stratum weights: zero or non-finite denominator")

    wt0 = cache.u1_0 / denom
    wt1 = cache.u1_1 / denom
    z0 = float(np.sum(wt0))
    z1 = float(np.sum(wt1))
    if z0 <= 0.0 or z1 <= 0.0:
        raise NumericError("degenerate stratum weights: a stratum has no mass")
    with np.errstate(invalid="ignore", divide="ignore"):
        b0 = np.sum(cache.u2_0 / denom[None, :], axis=1) / z0
        b1 = np.sum(cache.u2_1 / denom[None, :], axis=1) / z1

    w0, _ = posterior_weights(cache.u1_0, cache.u1_1, marg)
    what0 = float(np.sum(w0 * wt0) / z0)
    ese = cond_mean_score(cache.u1_0, cache.u1_1, cache.u2_0, cache.u2_1, marg)
    ese_d0 = np.sum(ese * wt0[None, :], axis=1) / z0

    one_minus = 1.0 - what0
    if not one_minus > 1e-10:
        raise NumericError(f"control weight average {what0!r} leaves no case mass")
    c_diff = (ese_d0 - b0 * what0 - b1 * one_minus) / one_minus
    a_diff = b1 - b0 + c_diff
    return MomentSet(b0=b0, b1=b1, what0=what0, ese_d0=ese_d0, c_diff=c_diff, a_diff=a_diff)


def efficient_score(
    beta: ParamVector,
    dist: GeneModel,
    sample: CaseControlSample,
    marg: MarginalDisease,
    moments: MomentSet,
    *,
    cache: ScoreCache | None = None,
) -> np.ndarray:
    """Orthogonalized per-record score, shaped (5, n).

    Each column is the raw score minus the conditional mean given that
    record's environment, plus (-1)^d a_diff times the weight of the
    opposite stratum.
    """
    if cache is None:
        cache = build_cache(beta, dist, sample)
    ese = cond_mean_score(cache.u1_0, cache.u1_1, cache.u2_0, cache.u2_1, marg)
    w0, w1 = posterior_weights(cache.u1_0, cache.u1_1, marg)
    sign = 1.0 - 2.0 * sample.d
    w_other = np.where(sample.d == 0, w1, w0)
    return cache.raw - ese + moments.a_diff[:, None] * (sign * w_other)[None, :]


def closed_form_score(
    beta: ParamVector,
    dist: GeneModel,
    sample: CaseControlSample,
    marg: MarginalDisease,
    moments: MomentSet,
    *,
    cache: ScoreCache | None = None,
) -> np.ndarray:
    """Independent recomputation of the per-record score via its closed form.

    Uses the algebraically equivalent correction factor
    (ese_d0 - b0) / (1 - what0) and expresses the stratum weights directly
    through the u1 integrals, so it shares no arithmetic path with a_diff or
    posterior_weights.  Agreement with efficient_score is a build invariant.
    """
    if cache is None:
        cache = build_cache(beta, dist, sample)
    ese = cond_mean_score(cache.u1_0, cache.u1_1, cache.u2_0, cache.u2_1, marg)
    denom = cache.u1_0 + marg.alpha * cache.u1_1
    factor = (moments.ese_d0 - moments.b0) / (1.0 - moments.what0)
    adj = np.where(
        sample.d == 0,
        (marg.alpha * cache.u1_1) / denom,
        -(cache.u1_0 / denom),
    )
    return cache.raw - ese + factor[:, None] * adj[None, :]


def estimating_function(
    beta: ParamVector,
    dist: GeneModel,
    sample: CaseControlSample,
    marg: MarginalDisease,
    a_diff: np.ndarray,
) -> np.ndarray:
    """Sample mean of the plug-in score with the nuisances held fixed.

    marg and a_diff stay at their outer-iteration values; everything that
    depends on beta directly (raw scores, gene integrals, conditional means,
    stratum weights) is recomputed from scratch at this beta.
    """
    cache = build_cache(beta, dist, sample)
    ese = cond_mean_score(cache.u1_0, cache.u1_1, cache.u2_0, cache.u2_1, marg)
    w0, w1 = posterior_weights(cache.u1_0, cache.u1_1, marg)
    sign = 1.0 - 2.0 * sample.d
    w_other = np.where(sample.d == 0, w1, w0)
    seff = cache.raw - ese + np.asarray(a_diff)[:, None] * (sign * w_other)[None, :]
    return seff.mean(axis=1)


def alpha_derivative_samples(
    beta: ParamVector,
    dist: GeneModel,
    sample: CaseControlSample,
    alpha: float,
    h: float,
) -> np.ndarray:
    """Central difference in alpha of the full plug-in score, per record.

    Both sides rebuild their own moment set at the shifted odds, so the
    difference quotient tracks the total alpha dependence, including the
    dependence through the moment corrections.
    """
    if not (np.isfinite(alpha) and alpha > 0.0 and 0.0 < h < alpha):
        raise ParameterError("alpha and step must satisfy 0 < h < alpha")
    cache = build_cache(beta, dist, sample)
    sides = []
    for a in (alpha + h, alpha - h):
        marg = MarginalDisease.from_alpha(a)
        moments = moment_set(beta, dist, sample, marg, cache=cache)
        sides.append(efficient_score(beta, dist, sample, marg, moments, cache=cache))
    return (sides[0] - sides[1]) / (2.0 * h)


def dalpha_identity_test(
    beta: ParamVector,
    dist: GeneModel,
    pop,
    draws: int,
    *,
    case_share: float = 0.5,
    h_rel: float = 0.05,
    seed: int = 0,
):
    """Monte Carlo check that the mean alpha-derivative of the score is zero.

    Draws a hypothetical-population sample (binomial case count with the
    given share), evaluates the per-record alpha difference quotient at the
    population's true odds, and returns (estimate, se) per component.  At the
    true parameters each component should be within a few se of zero.
    """
    from . import simulate

    alpha0 = simulate.population_alpha(pop)
    rng = np.random.default_rng([seed, draws])
    sample = simulate.sample_hypothetical(pop, draws, case_share, rng)
    quotients = alpha_derivative_samples(beta, dist, sample, alpha0, h_rel * alpha0)
    estimate = quotients.mean(axis=1)
    se = quotients.std(axis=1, ddof=1) / np.sqrt(sample.n)
    return estimate, se
