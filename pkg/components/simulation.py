# -*- coding: utf-8 -*-
"""
模拟模块 - Simulation scenarios and the Monte Carlo study runner.

Scenario 1: conditionally Poisson counts with mean 2t exp(beta0'Z).
Scenario 2: the same with a discrete subject frailty added to the slope,
which keeps the unconditional mean 2t exp(beta0'Z) but makes the counts
overdispersed.

Each replicate r draws everything from child r of SeedSequence(seed), so a
study is reproducible bit for bit whether replicates run serially or in a
process pool.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from config import ENVELOPE_CONFIG, SCENARIO_CONFIG
from components.estimators import FitConfig, FitResult, fit_mle, fit_mple
from components.inference import asymptotic_se, replicate_generators
from utils.errors import InferenceError, InputError, PanelCountError
from utils.panel_data import ArrayLike, Dataset, MonotoneStepFunction, Subject, Theta, metric_d1

logger = logging.getLogger(__name__)

METHODS = ('mple', 'mle')


@dataclass(frozen=True)
class ScenarioConfig:
    """One Monte Carlo study: scenario, sample size, replicate count and fit settings."""

    scenario: int = 1
    n: int = 100
    reps: int = 100
    beta0: Tuple[float, ...] = SCENARIO_CONFIG['beta0']
    lambda_slope: float = SCENARIO_CONFIG['lambda_slope']
    seed: int = 0
    fit_cfg: FitConfig = field(default_factory=FitConfig.for_monte_carlo)
    methods: Tuple[str, ...] = METHODS
    n_jobs: Optional[int] = None

    def __post_init__(self):
        if self.scenario not in (1, 2):
            raise InputError(f"scenario must be 1 or 2, got {self.scenario}")
        if self.n < 2:
            raise InputError(f"n must be >= 2, got {self.n}")
        if self.reps < 1:
            raise InputError(f"reps must be >= 1, got {self.reps}")
        if not self.lambda_slope > 0:
            raise InputError(f"lambda_slope must be positive, got {self.lambda_slope}")
        beta0 = tuple(float(b) for b in self.beta0)
        if len(beta0) != 3:
            raise InputError(f"scenario covariates are 3-dimensional, beta0 has {len(beta0)} entries")
        methods = tuple(self.methods)
        if not methods or any(m not in METHODS for m in methods):
            raise InputError(f"methods must be drawn from {METHODS}, got {methods}")
        object.__setattr__(self, 'beta0', beta0)
        object.__setattr__(self, 'methods', methods)

    def baseline(self, grid: ArrayLike) -> MonotoneStepFunction:
        """True baseline mean Lambda0(t) = slope * t discretised on ``grid``."""
        return MonotoneStepFunction.from_callable(lambda t: self.lambda_slope * t, grid)


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def draw_covariates(rng: np.random.Generator, size: int) -> np.ndarray:
    """Z1 ~ Unif(0,1), Z2 ~ N(0,1), Z3 ~ Bernoulli(0.5), independent columns."""
    return np.column_stack([
        rng.uniform(0.0, 1.0, size),
        rng.standard_normal(size),
        rng.integers(0, 2, size).astype(float),
    ])


def draw_observation_times(k: int, rng: np.random.Generator, decimals: Optional[int] = None) -> np.ndarray:
    """
    Order statistics of k Unif(1, 10) draws.

    With ``decimals`` the times are rounded and tied values collapse, so fewer
    than k times may come back.
    """
    low, high = SCENARIO_CONFIG['time_window']
    times = np.sort(rng.uniform(low, high, k))
    if decimals is None:
        return times
    return np.unique(np.round(times, decimals))


def draw_frailty(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.choice(
        np.asarray(SCENARIO_CONFIG['frailty_support']), size=size, p=SCENARIO_CONFIG['frailty_probs']
    )


def _generate(n: int, beta0: ArrayLike, rng: np.random.Generator, slopes: np.ndarray, Z: np.ndarray) -> Dataset:
    beta0 = np.asarray(beta0, dtype=float)
    risk = np.exp(Z @ beta0)
    ks = rng.choice(np.asarray(SCENARIO_CONFIG['k_support']), size=n)
    subjects = []
    for i in range(n):
        times = draw_observation_times(int(ks[i]), rng, SCENARIO_CONFIG['time_decimals'])
        means = slopes[i] * np.diff(times, prepend=0.0) * risk[i]
        counts = np.cumsum(rng.poisson(means))
        subjects.append(Subject(id=str(i + 1), z=Z[i], times=times, counts=counts))
    return Dataset(tuple(subjects))


def gen_scenario1(
    n: int,
    beta0: ArrayLike,
    rng: np.random.Generator,
    lambda_slope: float = SCENARIO_CONFIG['lambda_slope'],
) -> Dataset:
    """n subjects with Poisson increments of mean slope * (t_j - t_{j-1}) * exp(beta0'z), t_0 = 0."""
    Z = draw_covariates(rng, n)
    return _generate(n, beta0, rng, np.full(n, float(lambda_slope)), Z)


def gen_scenario2(
    n: int,
    beta0: ArrayLike,
    rng: np.random.Generator,
    lambda_slope: float = SCENARIO_CONFIG['lambda_slope'],
) -> Dataset:
    """As scenario 1 with subject slope (slope + alpha), alpha in {-0.4, 0, 0.4} w.p. (.25, .5, .25)."""
    Z = draw_covariates(rng, n)
    alpha = draw_frailty(rng, n)
    return _generate(n, beta0, rng, float(lambda_slope) + alpha, Z)


def generate(config: ScenarioConfig, rng: np.random.Generator) -> Dataset:
    generator = gen_scenario1 if config.scenario == 1 else gen_scenario2
    return generator(config.n, config.beta0, rng, config.lambda_slope)


def iter_datasets(config: ScenarioConfig) -> Iterator[Dataset]:
    """The replicate datasets of a study, in replicate order."""
    for rng in replicate_generators(config.seed, config.reps):
        yield generate(config, rng)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReplicateFit:
    beta: np.ndarray
    lambda_: MonotoneStepFunction
    d1: float
    runtime: float
    converged: bool


@dataclass(frozen=True, eq=False)
class McSummary:
    """
    Monte Carlo summary of one estimator.

    ``mse`` is the mean of (beta-hat - beta0)^2, i.e. BIAS^2 + SD^2 (reps-1)/reps
    with SD the (reps-1)-denominator standard deviation. ``sd`` is None for a
    single replicate.
    """

    method: str
    scenario: int
    n: int
    beta0: np.ndarray
    bias: np.ndarray
    sd: Optional[np.ndarray]
    mse: np.ndarray
    ase: Optional[np.ndarray]
    mean_runtime: float
    nonconverged: int
    failed: int
    estimates: np.ndarray
    lambdas: Tuple[MonotoneStepFunction, ...]
    d1: np.ndarray

    @property
    def reps(self) -> int:
        return int(self.estimates.shape[0])

    def to_frame(self, names: Optional[Sequence[str]] = None) -> pd.DataFrame:
        """Rows BIAS, SD, ASE, MSE x 10^2; one column per coefficient."""
        names = list(names) if names is not None else [f"beta{j + 1}" for j in range(self.bias.size)]
        missing = np.full(self.bias.size, np.nan)
        rows = {
            'BIAS': self.bias,
            'SD': self.sd if self.sd is not None else missing,
            'ASE': self.ase if self.ase is not None else missing,
            'MSE x 10^2': 100.0 * self.mse,
        }
        return pd.DataFrame.from_dict(rows, orient='index', columns=names)


def _run_replicate(args) -> Dict[str, Optional[ReplicateFit]]:
    config, rng = args
    data = generate(config, rng)
    theta0 = Theta(np.asarray(config.beta0), config.baseline(data.grid))
    fits: Dict[str, Optional[FitResult]] = {}
    try:
        fits['mple'] = fit_mple(data, cfg=config.fit_cfg)
    except PanelCountError as exc:
        logger.debug("mple replicate failed: %s", exc)
        fits['mple'] = None
    if 'mle' in config.methods:
        if fits['mple'] is None:
            fits['mle'] = None
        else:
            try:
                fits['mle'] = fit_mle(data, cfg=config.fit_cfg, warm_start=fits['mple'])
            except PanelCountError as exc:
                logger.debug("mle replicate failed: %s", exc)
                fits['mle'] = None

    outcome = {}
    for method in config.methods:
        result = fits[method]
        if result is None:
            outcome[method] = None
            continue
        outcome[method] = ReplicateFit(
            beta=result.beta,
            lambda_=result.lambda_,
            d1=metric_d1(result.theta, theta0, data),
            runtime=result.runtime,
            converged=result.converged,
        )
    return outcome


def _summarise(method: str, config: ScenarioConfig, replicates: List[Optional[ReplicateFit]]) -> McSummary:
    kept = [r for r in replicates if r is not None]
    failed = len(replicates) - len(kept)
    if failed > SCENARIO_CONFIG['max_failed_fraction'] * len(replicates) or not kept:
        raise InferenceError(f"monte carlo study for {method} unreliable", failed=failed, total=len(replicates))
    if failed:
        logger.warning("%s: %d of %d replicates failed and were excluded", method, failed, len(replicates))

    beta0 = np.asarray(config.beta0, dtype=float)
    estimates = np.vstack([r.beta for r in kept])
    errors = estimates - beta0
    try:
        ase = asymptotic_se(config.scenario, beta0, config.n)[method]
    except PanelCountError as exc:
        logger.warning("no asymptotic standard errors: %s", exc)
        ase = None
    return McSummary(
        method=method,
        scenario=config.scenario,
        n=config.n,
        beta0=beta0,
        bias=errors.mean(axis=0),
        sd=estimates.std(axis=0, ddof=1) if len(kept) > 1 else None,
        mse=(errors ** 2).mean(axis=0),
        ase=ase,
        mean_runtime=float(np.mean([r.runtime for r in kept])),
        nonconverged=sum(not r.converged for r in kept),
        failed=failed,
        estimates=estimates,
        lambdas=tuple(r.lambda_ for r in kept),
        d1=np.array([r.d1 for r in kept]),
    )


def monte_carlo(config: ScenarioConfig, progress: bool = False) -> Dict[str, McSummary]:
    """Run ``config.reps`` replicates and summarise each requested estimator."""
    tasks = [(config, rng) for rng in replicate_generators(config.seed, config.reps)]
    label = f"scenario {config.scenario} n={config.n}"
    if config.n_jobs and config.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=config.n_jobs) as pool:
            outcomes = list(tqdm(pool.map(_run_replicate, tasks), total=config.reps, disable=not progress, desc=label))
    else:
        outcomes = [_run_replicate(t) for t in tqdm(tasks, disable=not progress, desc=label)]

    summaries = {m: _summarise(m, config, [o[m] for o in outcomes]) for m in config.methods}
    for method, summary in summaries.items():
        logger.info(
            "%s %s: bias=%s sd=%s nonconverged=%d",
            label, method, np.round(summary.bias, 4),
            None if summary.sd is None else np.round(summary.sd, 4), summary.nonconverged,
        )
    return summaries


def envelope_grid() -> np.ndarray:
    return np.linspace(ENVELOPE_CONFIG['grid_start'], ENVELOPE_CONFIG['grid_stop'], ENVELOPE_CONFIG['grid_points'])


def lambda_envelope(
    replicate_lambdas: Sequence[MonotoneStepFunction],
    grid: Optional[ArrayLike] = None,
) -> pd.DataFrame:
    """Pointwise mean and 2.5 / 97.5 percentiles of the replicate baseline estimates."""
    if len(replicate_lambdas) == 0:
        raise InputError("envelope needs at least one replicate")
    if len(replicate_lambdas) < ENVELOPE_CONFIG['min_replicates']:
        logger.warning(
            "envelope from %d replicates; percentiles are unstable below %d",
            len(replicate_lambdas), ENVELOPE_CONFIG['min_replicates'],
        )
    grid = envelope_grid() if grid is None else np.asarray(grid, dtype=float)
    values = np.vstack([lam(grid) for lam in replicate_lambdas])
    return pd.DataFrame({
        'time': grid,
        'mean': values.mean(axis=0),
        'lower': np.percentile(values, ENVELOPE_CONFIG['lower_percentile'], axis=0),
        'upper': np.percentile(values, ENVELOPE_CONFIG['upper_percentile'], axis=0),
    })


def rate_table(studies: Mapping[int, Mapping[str, McSummary]]) -> pd.DataFrame:
    """
    Median d1 error and median n^(1/3) d1 per sample size and estimator.

    ``studies`` maps n to the output of ``monte_carlo`` at that n.
    """
    rows = []
    for n in sorted(studies):
        for method, summary in studies[n].items():
            median = float(np.median(summary.d1))
            rows.append({'n': n, 'method': method, 'median_d1': median, 'median_scaled_d1': n ** (1.0 / 3.0) * median})
    return pd.DataFrame(rows, columns=['n', 'method', 'median_d1', 'median_scaled_d1'])
