# -*- coding: utf-8 -*-
import math

import numpy as np
import pytest

from utils.errors import DomainError, InputError
from utils.panel_data import (
    Dataset,
    MonotoneStepFunction,
    Subject,
    Theta,
    eval_step,
    loglik_full,
    loglik_pseudo,
    metric_d1,
    metric_d2,
)


def _one(z, times, counts, id='s'):
    return Dataset((Subject(id, z, times, counts),))


class TestEvalStep:
    f = MonotoneStepFunction([1.0, 2.0], [3.0, 5.0])

    @pytest.mark.parametrize('t, expected', [(0.5, 0.0), (1.0, 3.0), (1.7, 3.0), (2.0, 5.0), (0.0, 0.0)])
    def test_values(self, t, expected):
        assert eval_step(self.f, t) == expected

    def test_beyond_last_jump_is_held_and_flagged(self):
        assert eval_step(self.f, 7.5) == 5.0
        assert self.f.is_extrapolated(7.5)
        assert not self.f.is_extrapolated(2.0)

    def test_negative_time(self):
        with pytest.raises(DomainError):
            eval_step(self.f, -0.1)
        with pytest.raises(DomainError):
            self.f(np.array([1.0, -1.0]))

    def test_nondecreasing_in_t(self, rng):
        f = MonotoneStepFunction(np.cumsum(rng.uniform(0.1, 1, 20)), np.cumsum(rng.uniform(0, 1, 20)))
        ts = np.sort(rng.uniform(0, 25, 500))
        assert np.all(np.diff(f(ts)) >= 0)


class TestMonotoneStepFunction:
    @pytest.mark.parametrize('jumps, values', [
        ([1.0, 1.0], [0.0, 1.0]),
        ([0.0, 1.0], [0.0, 1.0]),
        ([1.0, 2.0], [2.0, 1.0]),
        ([1.0, 2.0], [-1.0, 1.0]),
        ([1.0], [1.0, 2.0]),
    ])
    def test_rejects_invalid(self, jumps, values):
        with pytest.raises(InputError):
            MonotoneStepFunction(jumps, values)

    def test_from_callable_and_frame(self):
        f = MonotoneStepFunction.from_callable(lambda t: 2 * t, [1.0, 2.5, 4.0])
        assert np.allclose(f.values, [2.0, 5.0, 8.0])
        frame = f.to_frame()
        assert list(frame.columns) == ['time', 'value']
        assert frame['value'].tolist() == [2.0, 5.0, 8.0]


class TestSubject:
    def test_increments(self):
        s = Subject('x', [0.0], [1.0, 2.0, 3.0], [1, 1, 4])
        assert s.K == 3
        assert s.increments.tolist() == [1, 0, 3]

    @pytest.mark.parametrize('times, counts', [
        ([2.0, 1.0], [1, 2]),
        ([1.0, 2.0], [3, 1]),
        ([0.0, 1.0], [0, 1]),
        ([1.0, 2.0], [1.5, 2]),
        ([], []),
    ])
    def test_rejects_invalid(self, times, counts):
        with pytest.raises(InputError):
            Subject('x', [0.0], times, counts)

    def test_from_observations_sorts_and_collapses_ties(self):
        s = Subject.from_observations('x', [1.0], [3.0, 1.0, 3.0], [5, 2, 4])
        assert s.times.tolist() == [1.0, 3.0]
        assert s.counts.tolist() == [2, 5]

    def test_arrays_are_read_only(self):
        s = Subject('x', [0.0], [1.0], [1])
        with pytest.raises(ValueError):
            s.times[0] = 2.0


class TestDataset:
    def test_grid_and_observation_maps(self, toy_data):
        assert toy_data.grid.tolist() == [1.0, 2.0, 3.0, 4.0]
        assert toy_data.n == 4 and toy_data.n_obs == 9 and toy_data.d == 1
        at_obs, dlam = toy_data.grid_to_observations(np.array([1.0, 2.0, 3.0, 4.0]))
        assert at_obs.tolist() == [1, 2, 4, 2, 3, 1, 3, 4, 4]
        assert dlam.tolist() == [1, 1, 2, 2, 1, 1, 2, 1, 4]

    def test_mixed_dimension_rejected(self):
        with pytest.raises(InputError):
            Dataset((Subject('a', [0.0], [1.0], [1]), Subject('b', [0.0, 1.0], [1.0], [1])))

    def test_resample_keeps_names(self, toy_data):
        named = Dataset(toy_data.subjects, ('dose',))
        again = named.resample([3, 3, 0])
        assert again.n == 3
        assert [s.id for s in again.subjects] == ['d', 'd', 'a']
        assert again.covariate_names == ('dose',)


class TestLikelihoods:
    def test_pseudo_single_zero_count(self):
        data = _one([0.0], [1.0], [0])
        assert loglik_pseudo([0.0], MonotoneStepFunction([1.0], [1.0]), data) == pytest.approx(-1.0)

    def test_pseudo_two_observations(self):
        data = _one([1.0], [1.0, 2.0], [1, 3])
        lam = MonotoneStepFunction([1.0, 2.0], [1.0, 2.0])
        value = loglik_pseudo([math.log(2)], lam, data)
        assert value == pytest.approx(7 * math.log(2) - 6)

    def test_pseudo_positive_count_at_zero_baseline(self):
        data = _one([0.0], [1.0], [2])
        assert loglik_pseudo([0.0], MonotoneStepFunction([1.0], [0.0]), data) == -np.inf

    def test_full_single_zero_increment(self):
        data = _one([0.0], [1.0], [0])
        assert loglik_full([0.0], MonotoneStepFunction([1.0], [1.0]), data) == pytest.approx(-1.0)

    def test_full_two_increments(self):
        data = _one([1.0], [1.0, 2.0], [1, 3])
        lam = MonotoneStepFunction([1.0, 2.0], [1.0, 2.0])
        assert loglik_full([0.0], lam, data) == pytest.approx(-2.0)

    def test_full_positive_increment_on_flat_baseline(self):
        data = _one([0.0], [1.0, 2.0], [0, 1])
        assert loglik_full([0.0], MonotoneStepFunction([1.0, 2.0], [1.0, 1.0]), data) == -np.inf

    def test_dimension_mismatch(self, toy_data):
        lam = MonotoneStepFunction(toy_data.grid, [1.0, 2.0, 3.0, 4.0])
        with pytest.raises(InputError):
            loglik_pseudo([0.1, 0.2], lam, toy_data)
        with pytest.raises(InputError):
            loglik_full([0.1, 0.2], lam, toy_data)

    def test_permutation_invariance(self, toy_data):
        lam = MonotoneStepFunction(toy_data.grid, [0.8, 1.9, 3.2, 4.1])
        shuffled = toy_data.resample([2, 0, 3, 1])
        assert loglik_pseudo([0.3], lam, shuffled) == pytest.approx(loglik_pseudo([0.3], lam, toy_data), rel=1e-14)
        assert loglik_full([0.3], lam, shuffled) == pytest.approx(loglik_full([0.3], lam, toy_data), rel=1e-14)

    def test_single_visit_criteria_coincide(self, single_visit_data):
        lam = MonotoneStepFunction(single_visit_data.grid, 2.0 * single_visit_data.grid)
        beta = [0.4, -0.2]
        assert loglik_full(beta, lam, single_visit_data) == loglik_pseudo(beta, lam, single_visit_data)


class TestMetrics:
    def test_zero_at_identity(self, toy_data):
        theta = Theta([0.5], MonotoneStepFunction(toy_data.grid, [1.0, 2.0, 3.0, 4.0]))
        assert metric_d1(theta, theta, toy_data) == 0.0
        assert metric_d2(theta, theta, toy_data) == 0.0

    def test_beta_gap_only(self):
        data = _one([0.0, 0.0, 0.0], [1.0, 2.0], [1, 2])
        lam = MonotoneStepFunction([1.0, 2.0], [1.0, 2.0])
        assert metric_d1(Theta([1.0, 0.0, 0.0], lam), Theta([0.0, 0.0, 0.0], lam), data) == pytest.approx(1.0)
        assert metric_d2(Theta([2.0, 0.0, 0.0], lam), Theta([0.0, 0.0, 0.0], lam), data) == pytest.approx(2.0)

    def test_constant_baseline_gap(self):
        data = Dataset((
            Subject('a', [0.0], [1.0, 2.0], [0, 1]),
            Subject('b', [1.0], [2.0, 3.0], [1, 2]),
        ))
        truth = MonotoneStepFunction(data.grid, [1.0, 2.0, 3.0])
        shifted = MonotoneStepFunction(data.grid, [1.5, 2.5, 3.5])
        assert metric_d1(Theta([0.0], shifted), Theta([0.0], truth), data) == pytest.approx(0.5)

    def test_single_increment_gap(self):
        data = _one([0.0], [1.0, 2.0, 3.0], [0, 1, 2])
        truth = MonotoneStepFunction(data.grid, [1.0, 2.0, 3.0])
        bumped = MonotoneStepFunction(data.grid, [1.0, 2.3, 3.3])
        assert metric_d2(Theta([0.0], bumped), Theta([0.0], truth), data) == pytest.approx(math.sqrt(0.09 / 3))

    def test_triangle_and_increment_bound(self, rng):
        for _ in range(50):
            subjects = []
            for i in range(5):
                k = int(rng.integers(1, 5))
                times = np.sort(rng.choice(np.arange(1, 9), size=k, replace=False)).astype(float)
                subjects.append(Subject(str(i), [rng.normal()], times, np.cumsum(rng.integers(0, 3, k))))
            data = Dataset(tuple(subjects))
            m = data.grid.size
            thetas = [
                Theta([rng.normal()], MonotoneStepFunction(data.grid, np.cumsum(rng.uniform(0, 2, m))))
                for _ in range(3)
            ]
            a, b, c = thetas
            assert metric_d1(a, c, data) <= metric_d1(a, b, data) + metric_d1(b, c, data) + 1e-12

            beta_gap = float((a.beta - b.beta) @ (a.beta - b.beta))
            k0 = data.max_K
            lhs = metric_d1(a, b, data) ** 2 - beta_gap
            rhs = k0 ** 2 * (metric_d2(a, b, data) ** 2 - beta_gap)
            assert lhs <= rhs + 1e-10
