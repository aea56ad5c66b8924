# -*- coding: utf-8 -*-
"""Shared fixtures: repository root on sys.path and small panel datasets."""

import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from components.simulation import gen_scenario1  # noqa: E402
from utils.panel_data import Dataset, Subject  # noqa: E402


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


@pytest.fixture
def toy_data():
    """Four subjects, one covariate, overlapping inspection times."""
    subjects = (
        Subject('a', [0.2], [1.0, 2.0, 4.0], [1, 3, 6]),
        Subject('b', [1.1], [2.0, 3.0], [2, 5]),
        Subject('c', [-0.4], [1.0, 3.0, 4.0], [0, 1, 2]),
        Subject('d', [0.7], [4.0], [5]),
    )
    return Dataset(subjects)


@pytest.fixture
def scenario1_data():
    """Scenario 1 dataset with 60 subjects and a fixed seed."""
    return gen_scenario1(60, (-1.0, 0.5, 1.5), np.random.Generator(np.random.Philox(2024)))


@pytest.fixture
def single_visit_data(rng):
    """Every subject seen once (K = 1), two covariates."""
    subjects = []
    for i in range(40):
        z = rng.normal(size=2)
        t = float(np.round(rng.uniform(1, 10), 1))
        subjects.append(Subject(str(i), z, [t], [rng.poisson(2 * t * np.exp(0.5 * z[0] - 0.3 * z[1]))]))
    return Dataset(tuple(subjects))
