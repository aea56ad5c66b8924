# -*- coding: utf-8 -*-
"""
面板计数数据模型 - Panel count data model.

Subjects observed at a few inspection times with cumulative event counts,
the pooled dataset, right-continuous monotone step functions for the
baseline mean, both log-likelihood criteria and the empirical L2 error
metrics on (beta, Lambda).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import xlogy

from utils.errors import DomainError, InputError

logger = logging.getLogger(__name__)

ArrayLike = Union[Sequence[float], np.ndarray]


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Subject:
    """One individual: covariates, strictly increasing inspection times, cumulative counts."""

    id: str
    z: np.ndarray
    times: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        z = np.atleast_1d(np.array(self.z, dtype=float))
        times = np.array(self.times, dtype=float).ravel()
        raw_counts = np.array(self.counts, dtype=float).ravel()

        if z.ndim != 1 or z.size == 0:
            raise InputError(f"subject {self.id!r}: covariate vector must be 1-D and nonempty")
        if times.size == 0 or times.size != raw_counts.size:
            raise InputError(
                f"subject {self.id!r}: need K >= 1 times and as many counts "
                f"(got {times.size} times, {raw_counts.size} counts)"
            )
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(times)) and np.all(np.isfinite(raw_counts))):
            raise InputError(f"subject {self.id!r}: non-finite value")
        if np.any(times <= 0):
            raise InputError(f"subject {self.id!r}: observation times must be positive")
        if np.any(np.diff(times) <= 0):
            raise InputError(f"subject {self.id!r}: observation times must be strictly increasing")
        if np.any(raw_counts < 0) or np.any(raw_counts != np.round(raw_counts)):
            raise InputError(f"subject {self.id!r}: counts must be nonnegative integers")
        if np.any(np.diff(raw_counts) < 0):
            raise InputError(f"subject {self.id!r}: cumulative counts must be nondecreasing")

        object.__setattr__(self, 'id', str(self.id))
        object.__setattr__(self, 'z', _readonly(z))
        object.__setattr__(self, 'times', _readonly(times))
        object.__setattr__(self, 'counts', _readonly(raw_counts.astype(np.int64)))

    @classmethod
    def from_observations(cls, id, z: ArrayLike, times: ArrayLike, counts: ArrayLike) -> "Subject":
        """
        Build a subject from unsorted observations.

        Rows are sorted by time and tied times are collapsed to one
        observation carrying the largest cumulative count.
        """
        times = np.asarray(times, dtype=float).ravel()
        counts = np.asarray(counts, dtype=float).ravel()
        if times.size != counts.size:
            raise InputError(f"subject {id!r}: {times.size} times but {counts.size} counts")
        order = np.lexsort((counts, times))
        times, counts = times[order], counts[order]
        keep = np.ones(times.size, dtype=bool)
        keep[:-1] = times[1:] != times[:-1]
        if not np.all(keep):
            logger.debug("subject %r: collapsed %d tied observation times", id, int((~keep).sum()))
        return cls(id=id, z=z, times=times[keep], counts=counts[keep])

    @property
    def K(self) -> int:
        return int(self.times.size)

    @property
    def increments(self) -> np.ndarray:
        """dN_j = N(t_j) - N(t_{j-1}) with N(t_0) = 0."""
        return np.diff(self.counts, prepend=0)


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Immutable collection of subjects plus the pooled distinct-time grid.

    Observation-level arrays are flattened subject by subject so that the
    likelihoods and solvers can work with ``np.bincount`` style reductions.
    """

    subjects: Tuple[Subject, ...]
    covariate_names: Optional[Tuple[str, ...]] = None
    d: int = field(init=False, repr=False)
    grid: np.ndarray = field(init=False, repr=False)
    Z: np.ndarray = field(init=False, repr=False)
    obs_subject: np.ndarray = field(init=False, repr=False)
    obs_time: np.ndarray = field(init=False, repr=False)
    obs_count: np.ndarray = field(init=False, repr=False)
    obs_dcount: np.ndarray = field(init=False, repr=False)
    obs_grid: np.ndarray = field(init=False, repr=False)
    obs_prev_grid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        subjects = tuple(self.subjects)
        if not subjects:
            raise InputError("dataset must contain at least one subject")
        d = subjects[0].z.size
        for subject in subjects:
            if subject.z.size != d:
                raise InputError(
                    f"subject {subject.id!r} has {subject.z.size} covariates, expected {d}"
                )
        names = self.covariate_names
        if names is None:
            names = tuple(f"z{j + 1}" for j in range(d))
        elif len(names) != d:
            raise InputError(f"got {len(names)} covariate names for dimension {d}")

        sizes = np.array([s.K for s in subjects])
        obs_subject = np.repeat(np.arange(len(subjects)), sizes)
        obs_time = np.concatenate([s.times for s in subjects])
        obs_count = np.concatenate([s.counts for s in subjects])
        obs_dcount = np.concatenate([s.increments for s in subjects])
        grid = np.unique(obs_time)
        obs_grid = np.searchsorted(grid, obs_time)
        first = np.zeros(obs_time.size, dtype=bool)
        first[np.concatenate(([0], np.cumsum(sizes)[:-1]))] = True
        obs_prev_grid = np.where(first, -1, np.roll(obs_grid, 1))

        object.__setattr__(self, 'subjects', subjects)
        object.__setattr__(self, 'covariate_names', tuple(str(n) for n in names))
        object.__setattr__(self, 'd', int(d))
        object.__setattr__(self, 'grid', _readonly(grid))
        object.__setattr__(self, 'Z', _readonly(np.vstack([s.z for s in subjects])))
        object.__setattr__(self, 'obs_subject', _readonly(obs_subject))
        object.__setattr__(self, 'obs_time', _readonly(obs_time))
        object.__setattr__(self, 'obs_count', _readonly(obs_count.astype(float)))
        object.__setattr__(self, 'obs_dcount', _readonly(obs_dcount.astype(float)))
        object.__setattr__(self, 'obs_grid', _readonly(obs_grid))
        object.__setattr__(self, 'obs_prev_grid', _readonly(obs_prev_grid))

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def n_obs(self) -> int:
        return int(self.obs_time.size)

    @property
    def max_K(self) -> int:
        return max(s.K for s in self.subjects)

    def resample(self, indices: ArrayLike) -> "Dataset":
        """Dataset made of the subjects at ``indices`` (repeats allowed)."""
        indices = np.asarray(indices, dtype=int)
        return Dataset(tuple(self.subjects[i] for i in indices), self.covariate_names)

    def grid_to_observations(self, grid_values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Map values on ``grid`` to (Lambda(t_ij), dLambda_ij) per observation.

        dLambda uses Lambda(T_{K,0}) = Lambda(0) = 0.
        """
        extended = np.concatenate(([0.0], np.asarray(grid_values, dtype=float)))
        at_obs = extended[self.obs_grid + 1]
        at_prev = extended[self.obs_prev_grid + 1]
        return at_obs, at_obs - at_prev

    def linear_predictor(self, beta: ArrayLike) -> np.ndarray:
        """beta^T z_i per subject; raises InputError on dimension mismatch."""
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        if beta.shape != (self.d,):
            raise InputError(f"beta has shape {beta.shape}, covariates have dimension {self.d}")
        return self.Z @ beta


@dataclass(frozen=True, eq=False)
class MonotoneStepFunction:
    """
    Right-continuous nondecreasing step function with Lambda(t) = 0 before the first jump.
    """

    jumps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        jumps = np.array(self.jumps, dtype=float).ravel()
        values = np.array(self.values, dtype=float).ravel()
        if jumps.size != values.size:
            raise InputError(f"{jumps.size} jump locations but {values.size} values")
        if not (np.all(np.isfinite(jumps)) and np.all(np.isfinite(values))):
            raise InputError("step function must be finite")
        if np.any(jumps <= 0) or np.any(np.diff(jumps) <= 0):
            raise InputError("jump locations must be positive and strictly increasing")
        if np.any(values < 0) or np.any(np.diff(values) < 0):
            raise InputError("step values must be nonnegative and nondecreasing")
        object.__setattr__(self, 'jumps', _readonly(jumps))
        object.__setattr__(self, 'values', _readonly(values))

    def __call__(self, t: Union[float, ArrayLike]) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise DomainError("step function evaluated at negative time")
        idx = np.searchsorted(self.jumps, t, side='right') - 1
        extended = np.concatenate(([0.0], self.values))
        return extended[idx + 1]

    def is_extrapolated(self, t: Union[float, ArrayLike]) -> np.ndarray:
        """True where t lies beyond the last jump (value held constant there)."""
        last = self.jumps[-1] if self.jumps.size else 0.0
        return np.asarray(t, dtype=float) > last

    @classmethod
    def from_callable(cls, fn: Callable[[np.ndarray], np.ndarray], grid: ArrayLike) -> "MonotoneStepFunction":
        """Discretise a monotone function on ``grid`` (e.g. the true baseline 2t)."""
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.asarray(fn(grid), dtype=float))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'time': self.jumps, 'value': self.values})


@dataclass(frozen=True, eq=False)
class Theta:
    """Parameter pair (beta, Lambda)."""

    beta: np.ndarray
    lambda_: MonotoneStepFunction

    def __post_init__(self):
        object.__setattr__(self, 'beta', _readonly(np.atleast_1d(np.array(self.beta, dtype=float))))


def eval_step(f: MonotoneStepFunction, t: float) -> float:
    """Evaluate a step function at one time point t >= 0."""
    if t < 0:
        raise DomainError(f"t = {t} is negative")
    if f.is_extrapolated(t):
        logger.debug("evaluating step function beyond its last jump at t=%g", t)
    return float(f(t))


# ---------------------------------------------------------------------------
# Likelihoods
# ---------------------------------------------------------------------------

def pseudo_loglik_from_observations(linpred: np.ndarray, lam_obs: np.ndarray, data: Dataset) -> float:
    """
    Pseudo log-likelihood given beta^T z per subject and Lambda at every observation.

    0 log 0 is taken as 0; a positive count against Lambda = 0 gives -inf.
    """
    counts = data.obs_count
    eta = linpred[data.obs_subject]
    total = xlogy(counts, lam_obs).sum() + counts @ eta - np.exp(eta) @ lam_obs
    return float(total) if np.isfinite(total) else -np.inf


def full_loglik_from_observations(linpred: np.ndarray, dlam_obs: np.ndarray, data: Dataset) -> float:
    """Poisson-increment log-likelihood given dLambda at every observation."""
    dcounts = data.obs_dcount
    if np.any(dlam_obs < 0):
        return -np.inf
    eta = linpred[data.obs_subject]
    total = xlogy(dcounts, dlam_obs).sum() + dcounts @ eta - np.exp(eta) @ dlam_obs
    return float(total) if np.isfinite(total) else -np.inf


def _observed_lambda(lambda_: MonotoneStepFunction, data: Dataset) -> Tuple[np.ndarray, np.ndarray]:
    at_obs = lambda_(data.obs_time)
    at_prev = np.where(data.obs_prev_grid < 0, 0.0, np.roll(at_obs, 1))
    return at_obs, at_obs - at_prev


def loglik_pseudo(beta: ArrayLike, lambda_: MonotoneStepFunction, data: Dataset) -> float:
    """Pseudo log-likelihood: sum_ij N log Lambda + N beta^T z - exp(beta^T z) Lambda."""
    linpred = data.linear_predictor(beta)
    lam_obs, _ = _observed_lambda(lambda_, data)
    return pseudo_loglik_from_observations(linpred, lam_obs, data)


def loglik_full(beta: ArrayLike, lambda_: MonotoneStepFunction, data: Dataset) -> float:
    """Full log-likelihood: sum_ij dN log dLambda + dN beta^T z - exp(beta^T z) dLambda."""
    linpred = data.linear_predictor(beta)
    _, dlam_obs = _observed_lambda(lambda_, data)
    return full_loglik_from_observations(linpred, dlam_obs, data)


# ---------------------------------------------------------------------------
# Empirical L2 metrics
# ---------------------------------------------------------------------------

def _beta_gap(theta_hat: Theta, theta0: Theta) -> float:
    if theta_hat.beta.shape != theta0.beta.shape:
        raise InputError("beta vectors of different dimension")
    diff = theta_hat.beta - theta0.beta
    return float(diff @ diff)


def metric_d1(theta_hat: Theta, theta0: Theta, data: Dataset) -> float:
    """
    d1 distance: beta gap plus the L2 gap of Lambda under the uniform measure
    on all observation times.
    """
    hat_obs, _ = _observed_lambda(theta_hat.lambda_, data)
    true_obs, _ = _observed_lambda(theta0.lambda_, data)
    return float(np.sqrt(_beta_gap(theta_hat, theta0) + np.mean((hat_obs - true_obs) ** 2)))


def metric_d2(theta_hat: Theta, theta0: Theta, data: Dataset) -> float:
    """d2 distance: as d1 but on the increments dLambda of every subject."""
    _, hat_inc = _observed_lambda(theta_hat.lambda_, data)
    _, true_inc = _observed_lambda(theta0.lambda_, data)
    return float(np.sqrt(_beta_gap(theta_hat, theta0) + np.mean((hat_inc - true_inc) ** 2)))
