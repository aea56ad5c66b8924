# -*- coding: utf-8 -*-
"""
估计器模块 - Semiparametric estimators of the proportional mean model.

Maximum pseudo-likelihood (closed-form isotonic profile step for Lambda
alternated with Newton-Raphson for beta) and maximum likelihood (modified
iterative convex minorant algorithm for Lambda alternated with
Newton-Raphson for beta, started from the pseudo-likelihood fit).

Internally both fits run on covariates centred at their sample mean. The
model only depends on exp(beta^T z) Lambda, so centring leaves beta and the
maximised likelihood unchanged and rescales Lambda by exp(beta^T zbar).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, fields
from typing import Literal, Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from config import FIT_CONFIG, MONTE_CARLO_FIT_CONFIG
from utils.errors import (
    DivergenceError,
    InputError,
    NonIdentifiableError,
    NumericalError,
    StagnationError,
)
from utils.isotonic_utils import WeightedSeries, pava, profile_lambda_pseudo
from utils.panel_data import (
    ArrayLike,
    Dataset,
    MonotoneStepFunction,
    Subject,
    Theta,
    full_loglik_from_observations,
    loglik_full,
    loglik_pseudo,
)

logger = logging.getLogger(__name__)

Criterion = Literal['pseudo', 'full']


@dataclass(frozen=True)
class FitConfig:
    """Convergence tolerance, iteration caps and numerical guards for one fit."""

    eta: float = FIT_CONFIG['eta']
    max_outer: int = FIT_CONFIG['max_outer']
    max_inner: int = FIT_CONFIG['max_inner']
    beta_box: float = FIT_CONFIG['beta_box']
    delta_floor: float = FIT_CONFIG['delta_floor']
    icm_ridge: float = FIT_CONFIG['icm_ridge']
    line_search_depth: int = FIT_CONFIG['line_search_depth']
    hessian_cond_max: float = FIT_CONFIG['hessian_cond_max']
    icm_kkt_tol: float = FIT_CONFIG['icm_kkt_tol']

    def __post_init__(self):
        if not self.eta > 0:
            raise InputError(f"eta must be positive, got {self.eta}")
        if self.max_outer < 1 or self.max_inner < 1:
            raise InputError("iteration caps must be >= 1")
        if not self.beta_box > 0:
            raise InputError(f"beta_box must be positive, got {self.beta_box}")
        if self.delta_floor < 0:
            raise InputError(f"delta_floor must be >= 0, got {self.delta_floor}")
        if not self.icm_ridge > 0:
            raise InputError("icm_ridge must be positive")
        if self.line_search_depth < 0:
            raise InputError("line_search_depth must be >= 0")
        if not self.icm_kkt_tol > 0:
            raise InputError(f"icm_kkt_tol must be positive, got {self.icm_kkt_tol}")

    @property
    def beta_step_tol(self) -> float:
        """Largest coefficient move still counted as converged in the outer loops."""
        return 0.1 * float(np.sqrt(self.eta))

    @classmethod
    def from_dict(cls, values: dict) -> "FitConfig":
        """Build from a dict, ignoring keys that are not FitConfig fields."""
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in names})

    @classmethod
    def for_monte_carlo(cls, **overrides) -> "FitConfig":
        return cls.from_dict(dict(MONTE_CARLO_FIT_CONFIG, **overrides))


@dataclass(frozen=True, eq=False)
class FitResult:
    """Estimate (beta, Lambda), final criterion value and the outer-iteration record."""

    method: str
    beta: np.ndarray
    lambda_: MonotoneStepFunction
    loglik: float
    outer_iters: int
    converged: bool
    trace: Tuple[float, ...] = ()
    covariate_names: Tuple[str, ...] = ()
    runtime: float = field(default=0.0, compare=False)

    @property
    def theta(self) -> Theta:
        return Theta(self.beta, self.lambda_)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _as_beta(beta: Optional[ArrayLike], data: Dataset) -> np.ndarray:
    if beta is None:
        return np.zeros(data.d)
    beta = np.atleast_1d(np.array(beta, dtype=float))
    if beta.shape != (data.d,):
        raise InputError(f"beta has shape {beta.shape}, covariates have dimension {data.d}")
    return beta


def _relative_change(new: float, old: float) -> float:
    scale = abs(old) if old != 0 else 1.0
    return abs(new - old) / scale


def _outer_converged(change: float, step: np.ndarray, cfg: FitConfig) -> bool:
    # a flat likelihood alone is not enough while beta is still drifting
    return change <= cfg.eta and float(np.max(np.abs(step))) <= cfg.beta_step_tol


def _center(data: Dataset) -> Tuple[Dataset, np.ndarray]:
    zbar = data.Z.mean(axis=0)
    subjects = tuple(Subject(s.id, s.z - zbar, s.times, s.counts) for s in data.subjects)
    return Dataset(subjects, data.covariate_names), zbar


def check_identifiable(data: Dataset) -> None:
    """
    Reject data on which beta cannot be separated from the baseline scale.

    Needs at least two subjects, a positive count, covariate columns that
    are neither constant nor collinear with a constant, and no covariate
    direction that separates the zero-count subjects from the rest.
    """
    if data.n < 2:
        raise NonIdentifiableError("a single subject cannot separate beta from the baseline")
    if not np.any(data.obs_count > 0):
        raise NonIdentifiableError("no positive counts: beta is not identified")
    constant = np.all(data.Z == data.Z[0], axis=0)
    if np.any(constant):
        names = [data.covariate_names[j] for j in np.flatnonzero(constant)]
        raise NonIdentifiableError(f"covariate(s) {', '.join(names)} constant across subjects")
    design = np.column_stack([np.ones(data.n), data.Z])
    if np.linalg.matrix_rank(design) < data.d + 1:
        raise NonIdentifiableError("covariates are collinear with a constant")
    direction = _separating_direction(data)
    if direction is not None:
        raise NonIdentifiableError(
            f"covariates separate the zero-count subjects along {np.round(direction, 6)}; "
            "the likelihood increases without bound in beta"
        )


def _separating_direction(data: Dataset) -> Optional[np.ndarray]:
    """
    Direction v with v^T z equal on every subject with a positive count and
    v^T z no larger (somewhere smaller) on the others, or None.

    Moving beta along such a v and rescaling Lambda leaves the positive-count
    terms unchanged and strictly shrinks the expected counts of the
    zero-count subjects, so neither likelihood has a finite maximiser.
    """
    has_count = np.bincount(data.obs_subject, weights=data.obs_count, minlength=data.n) > 0
    anchor = data.Z[np.flatnonzero(has_count)[0]]
    offsets = data.Z - anchor
    tied = offsets[has_count]
    outcome = linprog(
        offsets.sum(axis=0),
        A_ub=offsets,
        b_ub=np.zeros(data.n),
        A_eq=tied if tied.shape[0] > 1 else None,
        b_eq=np.zeros(tied.shape[0]) if tied.shape[0] > 1 else None,
        bounds=[(-1.0, 1.0)] * data.d,
        method='highs',
    )
    if outcome.status != 0:
        logger.debug("separation check skipped: %s", outcome.message)
        return None
    tol = 1e-9 * data.n * (1.0 + np.max(np.abs(offsets)))
    return outcome.x if outcome.fun < -tol else None


def _subject_sums(lambda_: MonotoneStepFunction, data: Dataset, criterion: Criterion):
    """Per-subject totals (A_i, C_i) so that the criterion is sum C_i b^T z_i - exp(b^T z_i) A_i."""
    lam_obs = lambda_(data.obs_time)
    if criterion == 'pseudo':
        a_obs, c_obs = lam_obs, data.obs_count
    elif criterion == 'full':
        prev = np.where(data.obs_prev_grid < 0, 0.0, np.roll(lam_obs, 1))
        a_obs, c_obs = lam_obs - prev, data.obs_dcount
    else:
        raise InputError(f"unknown criterion {criterion!r}")
    A = np.bincount(data.obs_subject, weights=a_obs, minlength=data.n)
    C = np.bincount(data.obs_subject, weights=c_obs, minlength=data.n)
    return A, C


def _newton_step(info: np.ndarray, grad: np.ndarray, cfg: FitConfig) -> np.ndarray:
    if not np.all(np.isfinite(info)):
        raise NumericalError("non-finite Hessian in Newton-Raphson")
    cond = np.linalg.cond(info)
    if not np.isfinite(cond) or cond > cfg.hessian_cond_max:
        raise NumericalError(f"singular Hessian (condition number {cond:.3g}); degenerate covariates")
    return np.linalg.solve(info, grad)


# ---------------------------------------------------------------------------
# Newton-Raphson for beta
# ---------------------------------------------------------------------------

def newton_beta(
    lambda_: MonotoneStepFunction,
    data: Dataset,
    beta_init: ArrayLike,
    cfg: Optional[FitConfig] = None,
    criterion: Criterion = 'pseudo',
) -> np.ndarray:
    """
    Maximise the pseudo ('pseudo') or full ('full') log-likelihood over beta with Lambda held fixed.

    Gradient and Hessian are analytic; each Newton step is halved until the
    criterion does not decrease. Stops when ||beta_new - beta||_inf <= eta.
    """
    cfg = cfg or FitConfig()
    beta = _as_beta(beta_init, data)
    if np.max(np.abs(beta)) > cfg.beta_box:
        raise InputError(f"beta_init {beta} lies outside the box |beta| <= {cfg.beta_box}")
    A, C = _subject_sums(lambda_, data, criterion)
    Z = data.Z

    def objective(b):
        with np.errstate(over='ignore'):
            lin = Z @ b
            value = C @ lin - np.exp(lin) @ A
        return value if np.isfinite(value) else -np.inf

    current = objective(beta)
    for iteration in range(1, cfg.max_inner + 1):
        mu = np.exp(Z @ beta) * A
        grad = Z.T @ (C - mu)
        info = (Z * mu[:, None]).T @ Z
        step = _newton_step(info, grad, cfg)

        scale = 1.0
        for _ in range(cfg.line_search_depth + 1):
            candidate = beta + scale * step
            value = objective(candidate)
            if value >= current:
                break
            scale /= 2.0
        else:
            logger.debug("newton_beta: no ascent along Newton direction at iteration %d; stationary", iteration)
            return beta

        if np.max(np.abs(candidate)) > cfg.beta_box:
            raise DivergenceError(
                f"Newton iterate left the box |beta| <= {cfg.beta_box}; the profile is unbounded",
                beta=candidate,
            )
        moved = np.max(np.abs(candidate - beta))
        beta, current = candidate, value
        if moved <= cfg.eta:
            logger.debug("newton_beta converged in %d iterations", iteration)
            _check_gradient(beta, A, C, Z, cfg)
            return beta

    logger.warning("newton_beta reached max_inner=%d without meeting eta=%g", cfg.max_inner, cfg.eta)
    return beta


def _check_gradient(beta: np.ndarray, A: np.ndarray, C: np.ndarray, Z: np.ndarray, cfg: FitConfig) -> None:
    # gradient scale: the observed-count part of the score
    grad = Z.T @ (C - np.exp(Z @ beta) * A)
    tol = cfg.beta_step_tol * (1.0 + np.max(np.abs(Z.T @ C)))
    if np.max(np.abs(grad)) > tol:
        logger.warning("newton_beta stopped with gradient %.3g above %.3g", np.max(np.abs(grad)), tol)


# ---------------------------------------------------------------------------
# Modified iterative convex minorant algorithm for Lambda
# ---------------------------------------------------------------------------

def _icm_on_grid(linpred: np.ndarray, data: Dataset, lam: np.ndarray, cfg: FitConfig):
    """
    ICM iterations on the grid values; returns (values, iterations, loglik).

    Each iteration projects lam + g/d onto nondecreasing nonnegative vectors
    with weights d (diagonal of the negative Hessian) and backtracks from the
    projection towards the current point until the likelihood increases.
    Stops once the projection moves no grid value by more than
    icm_kkt_tol * (1 + max lam); at that point lam satisfies the
    order-constrained optimality conditions to that tolerance.
    """
    m = data.grid.size
    dN = data.obs_dcount
    positive = dN > 0
    risk = np.exp(linpred)[data.obs_subject]
    right = data.obs_grid
    has_left = data.obs_prev_grid >= 0
    left = data.obs_prev_grid[has_left]

    def evaluate(values):
        _, dlam = data.grid_to_observations(values)
        return full_loglik_from_observations(linpred, dlam, data), dlam

    current, dlam = evaluate(lam)
    if not np.isfinite(current):
        raise InputError("ICM start is infeasible: dLambda = 0 on an increment with a positive count")

    iteration = 0
    for iteration in range(1, cfg.max_inner + 1):
        ratio = np.divide(dN, dlam, out=np.zeros_like(dN), where=positive)
        score = ratio - risk
        curvature = np.divide(ratio, dlam, out=np.zeros_like(dN), where=positive)
        grad = np.bincount(right, score, m) - np.bincount(left, score[has_left], m)
        weight = np.bincount(right, curvature, m) + np.bincount(left, curvature[has_left], m)
        weight = np.where(weight > 0, weight, cfg.icm_ridge)

        target = WeightedSeries(data.grid, lam + grad / weight, weight)
        proposal = np.maximum(pava(target), 0.0)
        gap = np.max(np.abs(proposal - lam)) / (1.0 + np.max(lam))
        if gap <= cfg.icm_kkt_tol:
            logger.debug("ICM projected-gradient gap %.3g after %d iterations", gap, iteration)
            break
        floor = np.minimum(cfg.delta_floor, dlam)

        scale = 1.0
        accepted = False
        for _ in range(cfg.line_search_depth + 1):
            trial = (1.0 - scale) * lam + scale * proposal
            value, trial_dlam = evaluate(trial)
            if np.all(trial_dlam[positive] >= floor[positive]) and value > current:
                accepted = True
                break
            scale /= 2.0

        if not accepted:
            # the likelihood is flat to rounding along the projection
            if _relative_change(value, current) <= cfg.eta:
                logger.debug("ICM stationary after %d iterations (no ascent step left)", iteration)
                break
            raise StagnationError("ICM line search found no ascent step", iteration, current, scale)

        lam, current, dlam = trial, value, trial_dlam
    else:
        logger.debug("ICM reached max_inner=%d", cfg.max_inner)

    return lam, iteration, current


def icm_lambda(
    beta: ArrayLike,
    data: Dataset,
    lambda_init: MonotoneStepFunction,
    cfg: Optional[FitConfig] = None,
) -> MonotoneStepFunction:
    """Maximise the full log-likelihood over Lambda (jumps on data.grid) for fixed beta."""
    cfg = cfg or FitConfig()
    linpred = data.linear_predictor(beta)
    start = np.asarray(lambda_init(data.grid), dtype=float)
    values, iterations, value = _icm_on_grid(linpred, data, start, cfg)
    logger.debug("icm_lambda: %d iterations, loglik %.10g", iterations, value)
    return MonotoneStepFunction(data.grid, values)


def interpolate_warm_start(lambda_: MonotoneStepFunction, grid: ArrayLike, delta_floor: float = 0.0) -> MonotoneStepFunction:
    """
    Starting Lambda for the likelihood fit: the pseudo-likelihood estimate
    interpolated linearly between (0, 0) and its jump points, evaluated on
    ``grid``, then floored so consecutive grid values differ by >= delta_floor.
    """
    grid = np.asarray(grid, dtype=float)
    values = lambda_(grid)
    jumps = np.diff(values, prepend=0.0) > 0
    knots_t = np.concatenate(([0.0], grid[jumps]))
    knots_v = np.concatenate(([0.0], values[jumps]))
    interpolated = np.interp(grid, knots_t, knots_v)
    if delta_floor > 0:
        ramp = delta_floor * np.arange(1, grid.size + 1)
        interpolated = np.maximum.accumulate(interpolated - ramp) + ramp
    return MonotoneStepFunction(grid, interpolated)


# ---------------------------------------------------------------------------
# Profile criteria
# ---------------------------------------------------------------------------

def profile_loglik_pseudo(beta: ArrayLike, data: Dataset) -> float:
    """Pseudo log-likelihood at beta with Lambda profiled out in closed form."""
    return loglik_pseudo(beta, profile_lambda_pseudo(beta, data), data)


def profile_loglik_full(beta: ArrayLike, data: Dataset, cfg: Optional[FitConfig] = None) -> float:
    """Full log-likelihood at beta, Lambda maximised by ICM from the interpolated pseudo profile."""
    cfg = cfg or FitConfig()
    start = interpolate_warm_start(profile_lambda_pseudo(beta, data), data.grid, cfg.delta_floor)
    return loglik_full(beta, icm_lambda(beta, data, start, cfg), data)


# ---------------------------------------------------------------------------
# Outer fits
# ---------------------------------------------------------------------------

def fit_mple(data: Dataset, beta_init: Optional[ArrayLike] = None, cfg: Optional[FitConfig] = None) -> FitResult:
    """
    Maximum pseudo-likelihood estimate.

    Alternates the closed-form profile step for Lambda with Newton-Raphson
    for beta until the relative change of the pseudo log-likelihood is <= eta
    and the last beta move is <= 0.1 sqrt(eta).
    """
    cfg = cfg or FitConfig()
    check_identifiable(data)
    beta = _as_beta(beta_init, data)
    started = time.perf_counter()
    work, zbar = _center(data)

    lam = profile_lambda_pseudo(beta, work)
    loglik = loglik_pseudo(beta, lam, work)
    trace = [loglik]
    converged = False
    outer = 0
    for outer in range(1, cfg.max_outer + 1):
        previous = beta
        beta = newton_beta(lam, work, beta, cfg, 'pseudo')
        lam = profile_lambda_pseudo(beta, work)
        value = loglik_pseudo(beta, lam, work)
        trace.append(value)
        change = _relative_change(value, loglik)
        loglik = value
        logger.debug("mple outer %d: loglik %.12g (rel change %.3g)", outer, value, change)
        if _outer_converged(change, beta - previous, cfg):
            converged = True
            break

    if not converged:
        logger.warning("fit_mple: no convergence after %d outer iterations", cfg.max_outer)
    baseline = MonotoneStepFunction(lam.jumps, lam.values * np.exp(-beta @ zbar))
    result = FitResult(
        method='mple',
        beta=beta,
        lambda_=baseline,
        loglik=loglik_pseudo(beta, baseline, data),
        outer_iters=outer,
        converged=converged,
        trace=tuple(trace),
        covariate_names=data.covariate_names,
        runtime=time.perf_counter() - started,
    )
    logger.info("fit_mple: beta=%s loglik=%.10g outer=%d", np.round(beta, 6), result.loglik, outer)
    return result


def fit_mle(
    data: Dataset,
    cfg: Optional[FitConfig] = None,
    beta_init: Optional[ArrayLike] = None,
    warm_start: Optional[FitResult] = None,
) -> FitResult:
    """
    Maximum likelihood estimate under the Poisson-increment likelihood.

    Starts from the pseudo-likelihood fit (``warm_start`` if given) with
    Lambda interpolated linearly between its jump points, then alternates
    ICM for Lambda and Newton-Raphson for beta until the relative change of
    the log-likelihood is <= eta and the last beta move is <= 0.1 sqrt(eta), or
    max_outer is reached. ``runtime`` includes the pseudo-likelihood fit,
    also when it is passed in as ``warm_start``.
    """
    cfg = cfg or FitConfig()
    check_identifiable(data)
    mple = warm_start if warm_start is not None else fit_mple(data, beta_init, cfg)
    started = time.perf_counter()
    work, zbar = _center(data)

    beta = np.array(mple.beta, dtype=float)
    start = interpolate_warm_start(mple.lambda_, data.grid, cfg.delta_floor)
    lam_values = start.values * np.exp(beta @ zbar)
    linpred = work.linear_predictor(beta)
    loglik = full_loglik_from_observations(linpred, work.grid_to_observations(lam_values)[1], work)
    trace = [loglik]
    converged = False
    outer = 0
    for outer in range(1, cfg.max_outer + 1):
        previous = beta
        lam_values, inner, _ = _icm_on_grid(work.linear_predictor(beta), work, lam_values, cfg)
        beta = newton_beta(MonotoneStepFunction(work.grid, lam_values), work, beta, cfg, 'full')
        value = full_loglik_from_observations(
            work.linear_predictor(beta), work.grid_to_observations(lam_values)[1], work
        )
        trace.append(value)
        change = _relative_change(value, loglik)
        loglik = value
        logger.debug("mle outer %d: loglik %.12g (rel change %.3g, ICM %d)", outer, value, change, inner)
        if _outer_converged(change, beta - previous, cfg):
            converged = True
            break

    if not converged:
        logger.warning("fit_mle: no convergence after %d outer iterations", cfg.max_outer)
    baseline = MonotoneStepFunction(work.grid, lam_values * np.exp(-beta @ zbar))
    result = FitResult(
        method='mle',
        beta=beta,
        lambda_=baseline,
        loglik=loglik_full(beta, baseline, data),
        outer_iters=outer,
        converged=converged,
        trace=tuple(trace),
        covariate_names=data.covariate_names,
        runtime=time.perf_counter() - started + mple.runtime,
    )
    logger.info("fit_mle: beta=%s loglik=%.10g outer=%d", np.round(beta, 6), result.loglik, outer)
    return result


def fit(data: Dataset, method: str, cfg: Optional[FitConfig] = None, beta_init: Optional[ArrayLike] = None) -> FitResult:
    """Dispatch on method name ('mple' or 'mle')."""
    if method == 'mple':
        return fit_mple(data, beta_init, cfg)
    if method == 'mle':
        return fit_mle(data, cfg, beta_init)
    raise InputError(f"unknown method {method!r}; expected 'mple' or 'mle'")
