# -*- coding: utf-8 -*-
"""
推断模块 - Bootstrap standard errors, Wald tests and the analytic asymptotic
covariance matrices of the two simulation scenarios.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm
from tqdm import tqdm

from config import BOOTSTRAP_CONFIG
from components.estimators import FitConfig, fit
from utils.errors import InferenceError, InputError, NumericalError, PanelCountError
from utils.panel_data import ArrayLike, Dataset
from utils.quadrature_utils import scenario_covariate_rule

logger = logging.getLogger(__name__)

# Scenario constants of the asymptotic covariance formulas.
PSEUDO_SCALE = 1582.0 / 17787.0
FULL_SCALE = 1260.0 / 19179.0
PSEUDO_FRAILTY_SCALE = 463.12 / 17787.0
FULL_FRAILTY_SCALE = 7917588.0 / 19179.0 ** 2


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """Bootstrap covariance of beta-hat over the converged replicates."""

    se: np.ndarray
    cov: np.ndarray
    replicates: np.ndarray
    failed: int
    method: str = 'mple'
    seed: Optional[int] = None

    @property
    def n_replicates(self) -> int:
        return int(self.replicates.shape[0])


@dataclass(frozen=True)
class WaldRow:
    """One coefficient row: estimate, se, z = estimate / se and two-sided p-value."""

    name: str
    estimate: float
    se: float
    zstat: float
    pvalue: float


# ---------------------------------------------------------------------------
# Bootstrap
# ---------------------------------------------------------------------------

def replicate_generators(seed: int, count: int) -> List[np.random.Generator]:
    """
    Independent Philox generators, one per replicate, spawned from one seed.

    Replicate r always receives child r of SeedSequence(seed), so results do
    not depend on the order in which replicates are executed.
    """
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def _bootstrap_replicate(args) -> Optional[np.ndarray]:
    data, method, cfg, generator = args
    indices = generator.integers(0, data.n, size=data.n)
    try:
        result = fit(data.resample(indices), method, cfg)
    except PanelCountError as exc:
        logger.debug("bootstrap replicate failed: %s", exc)
        return None
    if not result.converged:
        return None
    return result.beta


def bootstrap_se(
    data: Dataset,
    method: str = 'mple',
    B: int = BOOTSTRAP_CONFIG['replicates'],
    seed: int = 0,
    cfg: Optional[FitConfig] = None,
    n_jobs: Optional[int] = None,
    progress: bool = False,
) -> BootstrapResult:
    """
    Resample whole subjects with replacement B times, refit, and return the
    sample covariance of the converged replicate estimates.

    Replicates that raise or do not converge are counted in ``failed`` and
    excluded; more than 20% failures raises InferenceError.
    """
    if B < 2:
        raise InputError(f"need B >= 2 bootstrap replicates, got {B}")
    if method not in ('mple', 'mle'):
        raise InputError(f"unknown method {method!r}")
    cfg = cfg or FitConfig()
    tasks = [(data, method, cfg, g) for g in replicate_generators(seed, B)]

    if n_jobs and n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(tqdm(pool.map(_bootstrap_replicate, tasks), total=B, disable=not progress, desc='bootstrap'))
    else:
        outcomes = [_bootstrap_replicate(t) for t in tqdm(tasks, disable=not progress, desc='bootstrap')]

    betas = [b for b in outcomes if b is not None]
    failed = B - len(betas)
    if failed > BOOTSTRAP_CONFIG['max_failed_fraction'] * B or len(betas) < 2:
        raise InferenceError("bootstrap standard errors unreliable", failed=failed, total=B)
    if failed:
        logger.warning("bootstrap: %d of %d replicates failed and were excluded", failed, B)

    replicates = np.vstack(betas)
    cov = np.atleast_2d(np.cov(replicates, rowvar=False, ddof=1))
    cov = (cov + cov.T) / 2.0
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return BootstrapResult(se=se, cov=cov, replicates=replicates, failed=failed, method=method, seed=seed)


def wald_test(estimates: ArrayLike, se: ArrayLike, names: Optional[Sequence[str]] = None) -> List[WaldRow]:
    """z = estimate / se and p = 2 (1 - Phi(|z|)) per coefficient."""
    estimates = np.atleast_1d(np.asarray(estimates, dtype=float))
    se = np.atleast_1d(np.asarray(se, dtype=float))
    if estimates.shape != se.shape:
        raise InputError("estimates and standard errors differ in length")
    if np.any(se <= 0):
        raise InputError("standard errors must be strictly positive")
    names = list(names) if names is not None else [f"z{j + 1}" for j in range(estimates.size)]
    zstat = estimates / se
    pvalue = 2.0 * norm.sf(np.abs(zstat))
    return [
        WaldRow(name=str(n), estimate=float(e), se=float(s), zstat=float(z), pvalue=float(p))
        for n, e, s, z, p in zip(names, estimates, se, zstat, pvalue)
    ]


# ---------------------------------------------------------------------------
# Analytic covariances for the simulation scenarios
# ---------------------------------------------------------------------------

def covariance_W(
    beta0: ArrayLike,
    tilde: bool = False,
    legendre_nodes: Optional[int] = None,
    hermite_nodes: Optional[int] = None,
) -> np.ndarray:
    """
    W = E{exp(b'Z) [Z - m]^{x2}} (tilde: exp(2 b'Z)) with m = E(Z exp(b'Z)) / E(exp(b'Z)),
    for Z1 ~ Unif(0,1), Z2 ~ N(0,1), Z3 ~ Bernoulli(0.5).
    """
    beta0 = np.atleast_1d(np.asarray(beta0, dtype=float))
    if beta0.shape != (3,):
        raise InputError(f"scenario covariance needs a 3-vector beta0, got shape {beta0.shape}")
    rule = scenario_covariate_rule(legendre_nodes, hermite_nodes)
    Z = rule.nodes
    risk = np.exp(Z @ beta0)
    center = (rule.weights * risk) @ Z / (rule.weights @ risk)
    centred = Z - center
    power = 2.0 if tilde else 1.0
    weights = rule.weights * risk ** power
    W = (centred * weights[:, None]).T @ centred
    return (W + W.T) / 2.0


def _inverse(W: np.ndarray) -> np.ndarray:
    try:
        inv = np.linalg.inv(W)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"W is singular: {exc}") from exc
    if not np.all(np.isfinite(inv)):
        raise NumericalError("W is singular")
    return inv


def scenario1_cov(beta0: ArrayLike, **nodes) -> Tuple[np.ndarray, np.ndarray]:
    """(Sigma_ps, Sigma) for conditionally Poisson counts."""
    W_inv = _inverse(covariance_W(beta0, tilde=False, **nodes))
    return PSEUDO_SCALE * W_inv, FULL_SCALE * W_inv


def scenario2_cov(beta0: ArrayLike, **nodes) -> Tuple[np.ndarray, np.ndarray]:
    """(Sigma_ps, Sigma) for the mixed Poisson (frailty) counts."""
    W_inv = _inverse(covariance_W(beta0, tilde=False, **nodes))
    W_tilde = covariance_W(beta0, tilde=True, **nodes)
    sandwich = W_inv @ W_tilde @ W_inv.T
    sigma_ps = PSEUDO_SCALE * W_inv + PSEUDO_FRAILTY_SCALE * sandwich
    sigma = FULL_SCALE * W_inv + FULL_FRAILTY_SCALE * sandwich
    return (sigma_ps + sigma_ps.T) / 2.0, (sigma + sigma.T) / 2.0


def scenario_cov(scenario: int, beta0: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    if scenario == 1:
        return scenario1_cov(beta0)
    if scenario == 2:
        return scenario2_cov(beta0)
    raise InputError(f"scenario must be 1 or 2, got {scenario}")


def asymptotic_se(scenario: int, beta0: ArrayLike, n: int) -> dict:
    """ASE rows sqrt(diag(Sigma) / n) keyed by estimator name."""
    if n < 1:
        raise InputError("n must be positive")
    sigma_ps, sigma = scenario_cov(scenario, beta0)
    return {
        'mple': np.sqrt(np.diag(sigma_ps) / n),
        'mle': np.sqrt(np.diag(sigma) / n),
    }
