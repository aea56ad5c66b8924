# -*- coding: utf-8 -*-
import numpy as np
import pytest

import components.inference as inference
from components.estimators import FitConfig, FitResult
from components.inference import (
    FULL_SCALE,
    PSEUDO_SCALE,
    asymptotic_se,
    bootstrap_se,
    covariance_W,
    scenario1_cov,
    scenario2_cov,
    scenario_cov,
    wald_test,
)
from components.simulation import gen_scenario1
from utils.errors import InferenceError, InputError, NumericalError
from utils.panel_data import Dataset, MonotoneStepFunction, Subject

BETA0 = (-1.0, 0.5, 1.5)


class TestWald:
    def test_zero_estimate(self):
        (row,) = wald_test([0.0], [1.0])
        assert row.zstat == 0.0 and row.pvalue == pytest.approx(1.0)

    @pytest.mark.parametrize('estimate, se, z, p', [
        (0.1446, 0.0565, 2.5593, 0.0105),
        (-0.7972, 0.3603, -2.2126, 0.0269),
    ])
    def test_reference_rows(self, estimate, se, z, p):
        (row,) = wald_test([estimate], [se], ['z'])
        assert round(row.zstat, 4) == z
        assert round(row.pvalue, 4) == p
        assert row.zstat * row.se == pytest.approx(row.estimate)

    def test_names_default(self):
        rows = wald_test([1.0, -2.0], [0.5, 4.0])
        assert [r.name for r in rows] == ['z1', 'z2']
        assert all(0.0 <= r.pvalue <= 1.0 for r in rows)

    @pytest.mark.parametrize('se', [[0.0], [-0.1]])
    def test_nonpositive_se(self, se):
        with pytest.raises(InputError):
            wald_test([1.0], se)


class TestCovariance:
    def test_covariance_of_z_at_zero(self):
        W = covariance_W([0.0, 0.0, 0.0])
        assert np.allclose(W, np.diag([1 / 12, 1.0, 0.25]), atol=1e-8)
        assert np.all(np.linalg.eigvalsh(W) >= 0)

    def test_scenario1_matrices(self):
        sigma_ps, sigma = scenario1_cov(BETA0)
        assert np.allclose(np.diag(sigma_ps), [0.571104, 0.045304, 0.303752], atol=1e-3)
        assert np.allclose(np.diag(sigma), [0.421848, 0.033464, 0.224368], atol=1e-3)
        off = ~np.eye(3, dtype=bool)
        assert np.all(np.abs(sigma_ps[off]) <= 1e-6)
        assert np.all(np.abs(sigma[off]) <= 1e-6)

    def test_scenario1_at_zero(self):
        sigma_ps, sigma = scenario1_cov([0.0, 0.0, 0.0])
        assert np.allclose(sigma_ps, PSEUDO_SCALE * np.diag([12.0, 1.0, 4.0]), atol=1e-7)
        assert np.allclose(sigma, FULL_SCALE * np.diag([12.0, 1.0, 4.0]), atol=1e-7)

    def test_scenario2_matrices(self):
        sigma_ps, sigma = scenario2_cov(BETA0)
        assert sigma_ps[0, 0] == pytest.approx(1.172450, abs=5e-3)
        assert sigma_ps[0, 1] == pytest.approx(-0.023852, abs=5e-3)
        assert sigma[2, 2] == pytest.approx(0.343985, abs=5e-3)
        assert sigma_ps[0, 1] == sigma_ps[1, 0]
        assert sigma[1, 2] == sigma[2, 1]

    def test_more_nodes_change_nothing(self):
        nodes = dict(legendre_nodes=80, hermite_nodes=80)
        for base, doubled in zip(scenario2_cov(BETA0), scenario2_cov(BETA0, **nodes)):
            assert np.max(np.abs(base - doubled)) <= 1e-6
        for base, doubled in zip(scenario1_cov(BETA0), scenario1_cov(BETA0, **nodes)):
            assert np.max(np.abs(base - doubled)) <= 1e-6

    def test_dimension_and_scenario_checks(self):
        with pytest.raises(InputError):
            covariance_W([0.0, 1.0])
        with pytest.raises(InputError):
            scenario_cov(3, BETA0)

    def test_singular_W(self, monkeypatch):
        monkeypatch.setattr(inference, 'covariance_W', lambda *a, **k: np.zeros((3, 3)))
        with pytest.raises(NumericalError):
            scenario1_cov(BETA0)

    @pytest.mark.parametrize('scenario, method, expected', [
        (1, 'mple', (0.0758, 0.0213, 0.0551)),
        (1, 'mle', (0.0649, 0.0183, 0.0474)),
    ])
    def test_asymptotic_standard_errors(self, scenario, method, expected):
        assert np.allclose(asymptotic_se(scenario, BETA0, 100)[method], expected, atol=5e-4)

    def test_scenario2_standard_errors(self):
        ase = asymptotic_se(2, BETA0, 100)
        assert ase['mple'][0] == pytest.approx(0.1083, abs=5e-4)
        assert ase['mle'][2] == pytest.approx(0.0587, abs=5e-4)


def _fixed_result(beta):
    return FitResult(
        method='mple',
        beta=np.asarray(beta, dtype=float),
        lambda_=MonotoneStepFunction([1.0], [1.0]),
        loglik=-1.0,
        outer_iters=1,
        converged=True,
    )


class TestBootstrap:
    def test_degenerate_resampling_gives_zero_se(self, toy_data, monkeypatch):
        monkeypatch.setattr(inference, 'fit', lambda data, method, cfg: _fixed_result([0.25]))
        result = bootstrap_se(toy_data, B=20, seed=1)
        assert np.array_equal(result.se, [0.0])
        assert result.n_replicates == 20 and result.failed == 0

    def test_identical_subjects_are_not_identifiable(self):
        data = Dataset(tuple(Subject(str(i), [0.5], [1.0, 2.0], [1, 3]) for i in range(6)))
        with pytest.raises(InferenceError) as info:
            bootstrap_se(data, B=10)
        assert info.value.failed == 10

    def test_reproducible(self, scenario1_data):
        cfg = FitConfig.for_monte_carlo()
        first = bootstrap_se(scenario1_data, B=6, seed=42, cfg=cfg)
        second = bootstrap_se(scenario1_data, B=6, seed=42, cfg=cfg)
        assert np.array_equal(first.replicates, second.replicates)
        assert np.array_equal(first.se, second.se)
        other = bootstrap_se(scenario1_data, B=6, seed=43, cfg=cfg)
        assert not np.array_equal(first.replicates, other.replicates)

    def test_covariance_properties(self, scenario1_data):
        result = bootstrap_se(scenario1_data, B=8, seed=3, cfg=FitConfig.for_monte_carlo())
        assert np.array_equal(result.cov, result.cov.T)
        assert np.all(np.linalg.eigvalsh(result.cov) >= -1e-12)
        assert np.allclose(result.se, np.sqrt(np.diag(result.cov)))

    def test_failures_below_ceiling_are_excluded(self, toy_data, monkeypatch):
        calls = []

        def flaky(data, method, cfg):
            calls.append(1)
            if len(calls) == 3:
                raise NumericalError("singular Hessian")
            return _fixed_result([0.1 * len(calls)])

        monkeypatch.setattr(inference, 'fit', flaky)
        result = bootstrap_se(toy_data, B=10)
        assert result.failed == 1
        assert result.n_replicates == 9

    def test_failure_ceiling(self, toy_data, monkeypatch):
        def broken(data, method, cfg):
            raise NumericalError("singular Hessian")

        monkeypatch.setattr(inference, 'fit', broken)
        with pytest.raises(InferenceError):
            bootstrap_se(toy_data, B=10)

    def test_nonconverged_replicates_count_as_failed(self, toy_data, monkeypatch):
        result = _fixed_result([0.0])
        stalled = FitResult(**{**result.__dict__, 'converged': False})
        monkeypatch.setattr(inference, 'fit', lambda data, method, cfg: stalled)
        with pytest.raises(InferenceError):
            bootstrap_se(toy_data, B=5)

    @pytest.mark.parametrize('kwargs', [{'B': 1}, {'method': 'em'}])
    def test_bad_arguments(self, toy_data, kwargs):
        with pytest.raises(InputError):
            bootstrap_se(toy_data, **kwargs)

    @pytest.mark.slow
    def test_calibrated_against_asymptotic_se(self):
        # one dataset's bootstrap se scatters by about 20% around the asymptotic value; average over datasets
        se = []
        for k, child in enumerate(np.random.SeedSequence(31).spawn(8)):
            data = gen_scenario1(100, BETA0, np.random.Generator(np.random.Philox(child)))
            se.append(bootstrap_se(data, 'mple', B=100, seed=k, n_jobs=4).se)
        expected = np.array([0.0758, 0.0213, 0.0551])
        assert np.all(np.abs(np.mean(se, axis=0) - expected) <= 0.2 * expected)
