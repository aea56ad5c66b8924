# -*- coding: utf-8 -*-
"""
保序回归工具 - Weighted isotonic regression helpers.

Pool-adjacent-violators for the nondecreasing least-squares fit, a direct
max-min evaluation used as an independent check, and the closed-form
profile step of the pseudo-likelihood for Lambda.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from utils.errors import InputError
from utils.panel_data import ArrayLike, Dataset, MonotoneStepFunction


@dataclass(frozen=True, eq=False)
class WeightedSeries:
    """Responses y with positive weights w at strictly increasing positions s."""

    positions: np.ndarray
    responses: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=float).ravel()
        responses = np.asarray(self.responses, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if responses.size == 0:
            raise InputError("isotonic regression needs at least one response")
        if not (positions.size == responses.size == weights.size):
            raise InputError(
                f"length mismatch: {positions.size} positions, "
                f"{responses.size} responses, {weights.size} weights"
            )
        if np.any(np.diff(positions) <= 0):
            raise InputError("positions must be strictly increasing")
        if not np.all(np.isfinite(responses)):
            raise InputError("responses must be finite")
        if not np.all(weights > 0) or not np.all(np.isfinite(weights)):
            raise InputError("weights must be finite and strictly positive")
        object.__setattr__(self, 'positions', positions)
        object.__setattr__(self, 'responses', responses)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def from_values(cls, responses: ArrayLike, weights: Optional[ArrayLike] = None) -> "WeightedSeries":
        """Series at positions 1..m, unit weights unless given."""
        responses = np.asarray(responses, dtype=float).ravel()
        if weights is None:
            weights = np.ones_like(responses)
        return cls(np.arange(1.0, responses.size + 1.0), responses, weights)


def pava(series: WeightedSeries) -> np.ndarray:
    """
    Weighted isotonic (nondecreasing) least-squares fit by pool-adjacent-violators.

    Blocks are kept on a stack; a new point is merged backwards while the
    previous block mean is >= the current one, so equal adjacent means pool.
    """
    y, w = series.responses, series.weights
    m = y.size
    block_sum = np.empty(m)
    block_weight = np.empty(m)
    block_end = np.empty(m, dtype=int)
    top = -1
    for j in range(m):
        top += 1
        block_sum[top] = w[j] * y[j]
        block_weight[top] = w[j]
        block_end[top] = j
        while top > 0 and block_sum[top - 1] / block_weight[top - 1] >= block_sum[top] / block_weight[top]:
            block_sum[top - 1] += block_sum[top]
            block_weight[top - 1] += block_weight[top]
            block_end[top - 1] = block_end[top]
            top -= 1

    fitted = np.empty(m)
    start = 0
    for b in range(top + 1):
        fitted[start:block_end[b] + 1] = block_sum[b] / block_weight[b]
        start = block_end[b] + 1
    return fitted


def isotonic_maxmin(series: WeightedSeries) -> np.ndarray:
    """
    Isotonic fit from the max-min formula
    lambda_l = max_{r<=l} min_{q>=l} sum_{r..q} w y / sum_{r..q} w.

    O(m^3); kept as an independent check on ``pava``.
    """
    y, w = series.responses, series.weights
    m = y.size
    cum_wy = np.concatenate(([0.0], np.cumsum(w * y)))
    cum_w = np.concatenate(([0.0], np.cumsum(w)))
    fitted = np.empty(m)
    for l in range(m):
        best = -np.inf
        for r in range(l + 1):
            q = np.arange(l, m)
            means = (cum_wy[q + 1] - cum_wy[r]) / (cum_w[q + 1] - cum_w[r])
            best = max(best, means.min())
        fitted[l] = best
    return fitted


def pooled_pseudo_series(beta: ArrayLike, data: Dataset) -> WeightedSeries:
    """
    Per-grid-time sufficient statistics of the pseudo-likelihood:
    w_l = sum exp(beta^T z_i) and y_l = (sum N_ij) / w_l over observations at s_l.
    """
    risk = np.exp(data.linear_predictor(beta))
    m = data.grid.size
    weights = np.bincount(data.obs_grid, weights=risk[data.obs_subject], minlength=m)
    counts = np.bincount(data.obs_grid, weights=data.obs_count, minlength=m)
    return WeightedSeries(data.grid, counts / weights, weights)


def profile_lambda_pseudo(beta: ArrayLike, data: Dataset) -> MonotoneStepFunction:
    """
    Maximiser of the pseudo-likelihood over Lambda for fixed beta.

    The criterion separates into sum_l N_l log lambda_l - w_l lambda_l on the
    grid, whose monotone maximiser is the weighted isotonic regression of
    N_l / w_l with weights w_l.
    """
    series = pooled_pseudo_series(beta, data)
    return MonotoneStepFunction(series.positions, pava(series))
