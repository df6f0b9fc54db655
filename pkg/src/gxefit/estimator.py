"""Fitting pipeline: initializer, Newton solver, outer loop, variance.

The estimate solves the sample estimating equation built from the
orthogonalized score.  Two nuisance quantities enter that equation: the
marginal disease rate of the source population and the moment correction
difference.  Both are evaluated at the current outer-iteration parameter
value and held fixed while Newton iterates the equation in beta; the outer
loop then refreshes them at the new solution until the solution stops
moving.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy import optimize
from scipy.special import expit

from .data import CaseControlSample
from .errors import DataError, GxefitError, NumericError, ParameterError
from .genes import BernoulliGene, GeneModel
from .logistic import ParamVector
from . import score as score_mod

#: The marginal disease rate must stay inside this open interval during the
#: outer loop; anything outside signals a degenerate fit worth aborting.
PLAUSIBLE_P1 = (1e-6, 1.0 - 1e-6)


@dataclasses.dataclass(frozen=True)
class FitConfig:
    """Solver settings.

    beta_tol bounds the max-norm parameter step, eq_tol the max-norm of the
    estimating equation.  jacobian_step is the relative half-width of the
    central-difference stencil.  prior_rate is the disease-rate prior used
    only to re-center the intercept start.  In split mode a seeded random
    partition puts round(n**split_exponent) records into the nuisance group
    and the rest into the equation group.
    """

    beta_tol: float = 1e-8
    eq_tol: float = 1e-8
    max_newton: int = 50
    max_outer: int = 20
    jacobian_step: float = 1e-5
    split_mode: bool = False
    split_exponent: float = 0.9
    split_seed: int = 0
    prior_rate: float = 0.05

    def __post_init__(self):
        if not (self.beta_tol > 0.0 and self.eq_tol > 0.0 and self.jacobian_step > 0.0):
            raise ParameterError("tolerances and jacobian_step must be positive")
        if self.max_newton < 1 or self.max_outer < 1:
            raise ParameterError("iteration limits must be at least 1")
        if not 0.5 < self.split_exponent < 1.0:
            raise ParameterError("split_exponent must lie in (0.5, 1)")
        if not 0.0 < self.prior_rate < 1.0:
            raise ParameterError("prior_rate must lie in (0, 1)")


@dataclasses.dataclass(frozen=True)
class FitResult:
    """Fitted parameters plus the nuisance state behind the final equation.

    p_hat and moments are the values used in the last Newton solve, so the
    estimating equation can be re-evaluated exactly from this record.  se is
    on the natural parameter scale; n_equation is the number of records
    behind the equation and the variance (the full sample, or the equation
    group in split mode).
    """

    beta_hat: ParamVector
    se: np.ndarray
    vcov: np.ndarray
    p_hat: score_mod.MarginalDisease
    moments: score_mod.MomentSet
    converged: bool
    newton_iters: int
    outer_iters: int
    eq_residual: float
    n0: int
    n1: int
    n_equation: int
    split_mode: bool = False


def initial_beta(sample: CaseControlSample, dist: GeneModel, prior_rate: float = 0.05) -> ParamVector:
    """Starting value: a prospective logistic fit plus stratum moments.

    The slopes come from an ordinary logistic regression of d on
    (1, g, e, ge), which is consistent for them under case-control sampling.
    The intercept from that fit absorbs the design, so it is re-centered by
    subtracting log(n1/n0) and adding the log odds of a configurable
    disease-rate prior.  The gene parameter starts at the control-stratum
    gene frequency (Bernoulli) or sample variance (Laplace).
    """
    if sample.n0 < 1 or sample.n1 < 1:
        raise DataError("initializer needs at least one case and one control")
    if not 0.0 < prior_rate < 1.0:
        raise ParameterError("prior_rate must lie in (0, 1)")
    x = np.column_stack(
        [np.ones(sample.n), sample.g, sample.e, sample.g * sample.e]
    )
    y = sample.d.astype(float)
    coef = np.zeros(4)
    for _ in range(100):
        p = expit(x @ coef)
        w = p * (1.0 - p)
        try:
            step = np.linalg.solve(x.T @ (x * w[:, None]), x.T @ (y - p))
        except np.linalg.LinAlgError:
            raise DataError(
                "logistic start failed: singular information matrix; the data "
                "may be separated, supply an explicit starting value"
            ) from None
        coef += step
        if np.max(np.abs(coef)) > 50.0:
            raise DataError(
                "logistic start diverged; the data look separated, supply an "
                "explicit starting value"
            )
        if np.max(np.abs(step)) < 1e-10:
            break
    else:
        raise NumericError("logistic start did not converge in 100 iterations")

    intercept = coef[0] - np.log(sample.n1 / sample.n0) + np.log(prior_rate / (1.0 - prior_rate))
    controls_g = sample.g[sample.d == 0]
    if dist.kind == "bernoulli":
        start4 = float(controls_g.mean())
        if not 0.0 < start4 < 1.0:
            raise DataError(
                f"control gene frequency {start4!r} cannot initialize a Bernoulli gene model"
            )
    else:
        start4 = float(controls_g.var(ddof=1))
        if not start4 > 0.0:
            raise DataError("control gene values are constant; cannot initialize the variance")
    return ParamVector(float(intercept), float(coef[1]), float(coef[2]), float(coef[3]), start4)


def _to_theta(beta: ParamVector, dist: GeneModel) -> np.ndarray:
    theta = beta.as_array()
    theta[4] = dist.to_unconstrained(theta[4])
    return theta


def _from_theta(theta: np.ndarray, dist: GeneModel) -> ParamVector:
    values = np.asarray(theta, dtype=float).copy()
    values[4] = dist.from_unconstrained(values[4])
    return ParamVector.from_array(values)


def _newton(
    sample_eq: CaseControlSample,
    dist: GeneModel,
    beta_start: ParamVector,
    config: FitConfig,
    marg: score_mod.MarginalDisease,
    a_diff: np.ndarray,
):
    """Newton iteration on the estimating equation with fixed nuisances.

    Iterates on (beta_c, beta_1, beta_2, beta_3, link(beta_4)) so trial
    steps cannot leave the admissible gene-parameter range.  The Jacobian is
    a central finite difference with relative step config.jacobian_step.
    Steps are accepted only when they reduce the merit norm, so the returned
    iterate is the best one visited; a step that cannot improve ends the
    iteration with converged=False.  Returns (beta_hat, iterations,
    eq_residual, converged).
    """

    def evaluate(theta):
        try:
            beta = _from_theta(theta, dist)
            value = score_mod.estimating_function(beta, dist, sample_eq, marg, a_diff)
        except (ParameterError, OverflowError):
            return None, None
        if not np.isfinite(value).all():
            return beta, None
        return beta, value

    theta = _to_theta(beta_start, dist)
    beta, fval = evaluate(theta)
    if fval is None:
        raise NumericError("estimating equation undefined at the starting value")
    if np.max(np.abs(fval)) < config.eq_tol:
        return beta, 0, float(np.max(np.abs(fval))), True

    converged = False
    iters = 0
    for iters in range(1, config.max_newton + 1):
        jac = np.empty((5, 5))
        for j in range(5):
            half = config.jacobian_step * max(1.0, abs(theta[j]))
            up = theta.copy()
            up[j] += half
            down = theta.copy()
            down[j] -= half
            _, f_up = evaluate(up)
            _, f_down = evaluate(down)
            if f_up is None or f_down is None:
                raise NumericError("estimating equation undefined at a Jacobian stencil point")
            jac[:, j] = (f_up - f_down) / (2.0 * half)
        try:
            delta = np.linalg.solve(jac, -fval)
        except np.linalg.LinAlgError:
            raise NumericError(
                f"singular Jacobian in Newton (condition ~ {np.linalg.cond(jac):.3g})"
            ) from None

        # Guarded update: halve the step while it lands somewhere unusable or
        # fails to reduce the merit norm.  With fixed nuisances the equation
        # can lack an exact root early in the outer loop, so a step that
        # cannot improve is a stall, not an error: stop and hand the best
        # iterate back for the next nuisance refresh.
        norm_old = float(np.linalg.norm(fval))
        scale = 1.0
        accepted = None
        for _ in range(8):
            candidate = theta + scale * delta
            beta_new, f_new = evaluate(candidate)
            if f_new is not None and np.linalg.norm(f_new) < norm_old:
                accepted = (candidate, beta_new, f_new)
                break
            scale *= 0.5
        if accepted is None:
            break
        theta_new, beta_new, f_new = accepted
        step_size = np.max(np.abs(beta_new.as_array() - beta.as_array()))
        theta, beta, fval = theta_new, beta_new, f_new
        if np.max(np.abs(fval)) < config.eq_tol and step_size < config.beta_tol:
            converged = True
            break
    return beta, iters, float(np.max(np.abs(fval))), converged


def estimate_variance(
    sample: CaseControlSample,
    dist: GeneModel,
    beta: ParamVector,
    marg: score_mod.MarginalDisease,
    moments: score_mod.MomentSet,
):
    """Inverse outer-product variance of the fitted parameters.

    vcov is n times the inverse of the summed score outer products,
    symmetrized; the standard error of component k is sqrt(vcov_kk / n).
    """
    seff = score_mod.efficient_score(beta, dist, sample, marg, moments)
    outer = seff @ seff.T
    eigvals = np.linalg.eigvalsh(outer)
    if eigvals[0] <= 0.0 or eigvals[-1] / eigvals[0] > 1e12:
        raise NumericError(
            "score outer-product matrix is numerically singular "
            f"(eigenvalues {np.array2string(eigvals, precision=3)})"
        )
    vcov = sample.n * np.linalg.inv(outer)
    vcov = 0.5 * (vcov + vcov.T)
    se = np.sqrt(np.diag(vcov) / sample.n)
    return vcov, se


def _nuisance_state(beta: ParamVector, dist: GeneModel, sample: CaseControlSample):
    """Marginal rate and moment set at one parameter value, with the
    plausibility guard on the solved rate."""
    cache = score_mod.build_cache(beta, dist, sample)
    marg = score_mod.solve_marginal(beta, dist, sample, u1=(cache.u1_0, cache.u1_1))
    if not PLAUSIBLE_P1[0] < marg.p1 < PLAUSIBLE_P1[1]:
        raise NumericError(
            f"solved marginal disease rate p1={marg.p1!r} is outside the plausible "
            "range; the model is degenerate at the current parameters"
        )
    moments = score_mod.moment_set(beta, dist, sample, marg, cache=cache)
    return marg, moments


def newton_solve(
    sample: CaseControlSample,
    dist: GeneModel,
    beta_start: ParamVector,
    config: FitConfig | None = None,
) -> FitResult:
    """One nuisance evaluation plus one Newton solve.

    The marginal rate and the moment corrections are computed at beta_start
    and held fixed through the Newton iteration.  fit() wraps this in the
    outer refresh loop.
    """
    config = config or FitConfig()
    marg, moments = _nuisance_state(beta_start, dist, sample)
    beta_hat, iters, residual, converged = _newton(
        sample, dist, beta_start, config, marg, moments.a_diff
    )
    try:
        vcov, se = estimate_variance(sample, dist, beta_hat, marg, moments)
    except NumericError:
        if converged:
            raise
        vcov = np.full((5, 5), np.nan)
        se = np.full(5, np.nan)
    return FitResult(
        beta_hat=beta_hat,
        se=se,
        vcov=vcov,
        p_hat=marg,
        moments=moments,
        converged=converged,
        newton_iters=iters,
        outer_iters=1,
        eq_residual=residual,
        n0=sample.n0,
        n1=sample.n1,
        n_equation=sample.n,
    )


def _validate_for_fit(sample: CaseControlSample, dist: GeneModel) -> None:
    if sample.n0 < 1 or sample.n1 < 1:
        raise DataError(f"fit needs both strata, got {sample.n1} cases and {sample.n0} controls")
    if isinstance(dist, BernoulliGene) and not np.isin(sample.g, (0.0, 1.0)).all():
        raise DataError("gene column has non-binary values; the Bernoulli gene model does not apply")


# Hard-failure sentinel handed to the fallback root finder when a trial point
# is inadmissible; a large flat value steers its trust region back.
_PENALTY = np.full(5, 1e3)


def _self_consistent_start(
    sample_eq: CaseControlSample,
    sample_nuis: CaseControlSample,
    dist: GeneModel,
    beta_init: ParamVector,
) -> ParamVector | None:
    """Restart point for the refresh loop: root of the joint system.

    The alternating loop holds the nuisances fixed inside each Newton solve,
    which is faithful to the estimator definition but only locally stable:
    when the intercept start lands outside its basin the iterates slide into
    the degenerate low-disease-rate region instead of crossing back.  Solving
    the same equation with the nuisances refreshed at every trial point has
    the same roots and a much larger basin, so its solution makes a reliable
    restart for the documented loop.

    The intercept is so weakly identified that the solver itself can follow
    the degenerate valley when the root sits far above the start (the true
    scatter of the intercept estimate spans several units), so the search is
    retried from upward-shifted intercept starts before giving up.  Returns
    None when no usable root is found; never raises.
    """

    def residual(theta):
        try:
            beta = _from_theta(theta, dist)
            marg, moments = _nuisance_state(beta, dist, sample_nuis)
            value = score_mod.estimating_function(beta, dist, sample_eq, marg, moments.a_diff)
        except (GxefitError, OverflowError):
            return _PENALTY
        if not np.isfinite(value).all():
            return _PENALTY
        return value

    for shift in (0.0, 2.0, 4.0, 6.0):
        start = beta_init.as_array()
        start[0] += shift
        theta0 = _to_theta(ParamVector.from_array(start), dist)
        try:
            sol = optimize.root(residual, theta0, method="hybr", tol=1e-12)
        except Exception:
            continue
        if not (sol.success and np.isfinite(sol.x).all() and np.max(np.abs(sol.fun)) < 1e-6):
            continue
        try:
            beta = _from_theta(sol.x, dist)
            _nuisance_state(beta, dist, sample_nuis)
        except GxefitError:
            continue
        return beta
    return None


def _refresh_loop(
    sample: CaseControlSample,
    dist: GeneModel,
    beta: ParamVector,
    config: FitConfig,
) -> FitResult:
    """The documented alternation: nuisance refresh, then Newton, until the
    parameter settles.  newton_iters accumulates across refresh rounds."""
    result = None
    total_newton = 0
    for outer in range(1, config.max_outer + 1):
        result = newton_solve(sample, dist, beta, config)
        total_newton += result.newton_iters
        result = dataclasses.replace(result, outer_iters=outer, newton_iters=total_newton)
        delta = np.max(np.abs(result.beta_hat.as_array() - beta.as_array()))
        beta = result.beta_hat
        # An inner solve that stalled is not fatal: far from the joint fixed
        # point the fixed-nuisance equation can lack a root, and refreshing
        # the nuisances at the stall point restores it.  Overall convergence
        # needs a clean inner solve plus a settled outer step.
        if result.converged and delta < config.beta_tol:
            return result
    return dataclasses.replace(result, converged=False)


def fit(
    sample: CaseControlSample,
    dist: GeneModel,
    config: FitConfig | None = None,
    *,
    beta_start: ParamVector | None = None,
) -> FitResult:
    """Full pipeline: start value, then alternate nuisance refresh and
    Newton solve until the solution stabilizes.

    If the alternation fails to settle from the initial value, the joint
    system is solved once with continuously refreshed nuisances and the
    alternation is rerun from that point, so the returned state always comes
    from the documented loop.  Returns a flagged (converged=False) result
    instead of raising when every route is exhausted; hard numerical
    failures with no fallback left raise NumericError.
    """
    config = config or FitConfig()
    _validate_for_fit(sample, dist)
    if config.split_mode:
        return fit_split(sample, dist, config, beta_start=beta_start)
    beta = beta_start if beta_start is not None else initial_beta(sample, dist, config.prior_rate)
    result = None
    error = None
    try:
        result = _refresh_loop(sample, dist, beta, config)
        if result.converged:
            return result
    except NumericError as exc:
        error = exc
    restart = _self_consistent_start(sample, sample, dist, beta)
    if restart is not None:
        try:
            retry = _refresh_loop(sample, dist, restart, config)
        except NumericError:
            retry = None
        if retry is not None and (retry.converged or result is None):
            return retry
    if result is not None:
        return result
    raise error


def fit_split(
    sample: CaseControlSample,
    dist: GeneModel,
    config: FitConfig | None = None,
    *,
    beta_start: ParamVector | None = None,
) -> FitResult:
    """Split-sample variant: nuisances from one group, equation from the other.

    A seeded random partition assigns round(n**split_exponent) records to the
    nuisance group; the estimating equation and the variance use only the
    remaining records.  Group stratum counts feed each group's own
    computations.
    """
    config = config or FitConfig()
    _validate_for_fit(sample, dist)
    n = sample.n
    m = int(round(n ** config.split_exponent))
    n_eq = n - m
    if m < 50 or n_eq < 50:
        raise DataError(f"split mode needs both groups to hold at least 50 records, got {m} and {n_eq}")
    rng = np.random.default_rng(config.split_seed)
    order = rng.permutation(n)
    nuis = sample.subset(np.sort(order[:m]))
    eq = sample.subset(np.sort(order[m:]))
    for label, part in (("nuisance", nuis), ("equation", eq)):
        if part.n0 < 1 or part.n1 < 1:
            raise DataError(f"split {label} group lost a stratum; change split_seed or disable split mode")

    def split_loop(beta: ParamVector) -> FitResult:
        converged_outer = False
        beta_hat, residual, converged = beta, np.inf, False
        total_newton = 0
        marg = moments = None
        outer = 0
        for outer in range(1, config.max_outer + 1):
            marg, moments = _nuisance_state(beta, dist, nuis)
            beta_hat, iters, residual, converged = _newton(eq, dist, beta, config, marg, moments.a_diff)
            total_newton += iters
            delta = np.max(np.abs(beta_hat.as_array() - beta.as_array()))
            beta = beta_hat
            if converged and delta < config.beta_tol:
                converged_outer = True
                break
        try:
            vcov, se = estimate_variance(eq, dist, beta_hat, marg, moments)
        except NumericError:
            if converged and converged_outer:
                raise
            vcov = np.full((5, 5), np.nan)
            se = np.full(5, np.nan)
        return FitResult(
            beta_hat=beta_hat,
            se=se,
            vcov=vcov,
            p_hat=marg,
            moments=moments,
            converged=converged and converged_outer,
            newton_iters=total_newton,
            outer_iters=outer,
            eq_residual=float(residual),
            n0=sample.n0,
            n1=sample.n1,
            n_equation=eq.n,
            split_mode=True,
        )

    beta = beta_start if beta_start is not None else initial_beta(sample, dist, config.prior_rate)
    result = None
    error = None
    try:
        result = split_loop(beta)
        if result.converged:
            return result
    except NumericError as exc:
        error = exc
    restart = _self_consistent_start(eq, nuis, dist, beta)
    if restart is not None:
        try:
            retry = split_loop(restart)
        except NumericError:
            retry = None
        if retry is not None and (retry.converged or result is None):
            return retry
    if result is not None:
        return result
    raise error
