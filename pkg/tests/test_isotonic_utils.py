# -*- coding: utf-8 -*-
import numpy as np
import pytest

from utils.errors import InputError
from utils.isotonic_utils import (
    WeightedSeries,
    isotonic_maxmin,
    pava,
    pooled_pseudo_series,
    profile_lambda_pseudo,
)
from utils.panel_data import Dataset, MonotoneStepFunction, Subject, loglik_pseudo


@pytest.mark.parametrize('solver', [pava, isotonic_maxmin])
@pytest.mark.parametrize('y, w, expected', [
    ([1, 2, 3], [1, 1, 1], [1, 2, 3]),
    ([3, 1], [1, 1], [2, 2]),
    ([1, 3, 2], [1, 1, 2], [1, 7 / 3, 7 / 3]),
])
def test_known_fits(solver, y, w, expected):
    assert np.allclose(solver(WeightedSeries.from_values(y, w)), expected, atol=1e-12)


def test_pava_matches_maxmin_on_random_series(rng):
    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(1, 13))
        series = WeightedSeries.from_values(rng.normal(size=m) * 3, rng.uniform(0.05, 5, m))
        worst = max(worst, np.max(np.abs(pava(series) - isotonic_maxmin(series))))
    assert worst <= 1e-10


def test_pava_block_structure(rng):
    for _ in range(200):
        m = int(rng.integers(2, 30))
        y = rng.poisson(3, m).astype(float)
        w = rng.uniform(0.1, 3, m)
        fitted = pava(WeightedSeries.from_values(y, w))
        assert np.all(np.diff(fitted) >= 0)
        assert np.sum(w * (y - fitted)) == pytest.approx(0.0, abs=1e-9)
        # every constant block carries its own weighted mean
        for value in np.unique(fitted):
            block = fitted == value
            assert np.sum(w[block] * (y[block] - value)) == pytest.approx(0.0, abs=1e-9)


def test_pava_fixed_point_on_monotone_input(rng):
    y = np.cumsum(rng.uniform(0.01, 1, 25))
    assert np.allclose(pava(WeightedSeries.from_values(y, rng.uniform(0.5, 2, 25))), y, rtol=1e-14, atol=0)


def test_equal_adjacent_means_pool():
    fitted = pava(WeightedSeries.from_values([2.0, 2.0, 1.0]))
    assert np.allclose(fitted, [5 / 3] * 3)


@pytest.mark.parametrize('positions, y, w', [
    ([], [], []),
    ([1, 2], [1, 2], [1, 0]),
    ([1, 2], [1, 2], [1, -1]),
    ([1, 1], [1, 2], [1, 1]),
    ([1, 2, 3], [1, 2], [1, 1]),
    ([1, 2], [1, np.nan], [1, 1]),
])
def test_invalid_series(positions, y, w):
    with pytest.raises(InputError):
        WeightedSeries(positions, y, w)


class TestProfilePseudo:
    def test_single_observation(self):
        data = Dataset((Subject('a', [0.7], [1.0], [3]),))
        lam = profile_lambda_pseudo([0.4], data)
        assert lam.values[0] == pytest.approx(3 * np.exp(-0.28))

    def test_pooled_mean_at_shared_time(self):
        data = Dataset((Subject('a', [0.0], [1.0], [2]), Subject('b', [1.0], [1.0], [4])))
        assert profile_lambda_pseudo([0.0], data).values.tolist() == [3.0]

    def test_reduces_to_weighted_isotonic_regression(self):
        # pooled responses (1, 3, 2) with pooled weights (1, 1, 2) at beta = 0
        data = Dataset((
            Subject('a', [0.0], [1.0, 2.0, 3.0], [1, 3, 3]),
            Subject('b', [1.0], [3.0], [1]),
        ))
        series = pooled_pseudo_series([0.0], data)
        assert series.weights.tolist() == [1.0, 1.0, 2.0]
        assert np.allclose(profile_lambda_pseudo([0.0], data).values, [1, 7 / 3, 7 / 3])

    def test_leading_zero_counts_give_zero(self):
        data = Dataset((Subject('a', [0.0], [1.0, 2.0], [0, 3]), Subject('b', [1.0], [1.5], [0])))
        values = profile_lambda_pseudo([0.2], data).values
        assert values[0] == 0.0 and values[1] == 0.0 and values[2] > 0

    def test_argmax_against_random_candidates(self, toy_data, rng):
        beta = [0.35]
        best = profile_lambda_pseudo(beta, toy_data)
        best_value = loglik_pseudo(beta, best, toy_data)
        m = toy_data.grid.size
        for _ in range(100):
            if rng.uniform() < 0.5:
                values = np.cumsum(rng.uniform(0, 3, m))
            else:
                values = np.maximum.accumulate(best.values * np.exp(rng.normal(scale=0.1, size=m)))
            candidate = MonotoneStepFunction(toy_data.grid, values)
            assert loglik_pseudo(beta, candidate, toy_data) <= best_value + 1e-12

    def test_scale_equivariance(self, toy_data):
        scaled = Dataset(tuple(Subject(s.id, s.z, s.times, 3 * s.counts) for s in toy_data.subjects))
        base = profile_lambda_pseudo([0.2], toy_data).values
        assert np.allclose(profile_lambda_pseudo([0.2], scaled).values, 3 * base, rtol=1e-12)
