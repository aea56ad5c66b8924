# -*- coding: utf-8 -*-
"""
数据读写 - CSV ingestion and YAML result documents.

Input is long-format CSV, one row per (subject, inspection time)::

    subject_id,time,count,z1,z2,...

``count`` is the cumulative count N(t) unless ``increments=True``, in which
case it is the count since the previous inspection and is summed per
subject. Columns after ``count`` are the covariates; their header names are
kept as coefficient names.

Results are written as YAML documents (``yaml.safe_dump``, keys in a fixed
order, floats at full precision) so identical runs give identical bytes.
"""

from __future__ import annotations

import io
import logging
from typing import Dict, List, Mapping, Optional, Sequence, TextIO, Union

import numpy as np
import pandas as pd
import yaml

from components.estimators import FitResult
from components.inference import BootstrapResult, asymptotic_se, scenario_cov, wald_test
from utils.errors import InputError, ValidationError
from utils.panel_data import Dataset, Subject

logger = logging.getLogger(__name__)

KEY_COLUMNS = ('subject_id', 'time', 'count')

Source = Union[str, TextIO]


def _read_frame(stream: Source) -> pd.DataFrame:
    try:
        frame = pd.read_csv(stream, dtype={'subject_id': str}, skipinitialspace=True, float_precision='round_trip')
    except pd.errors.EmptyDataError as exc:
        raise InputError("empty CSV input") from exc
    except pd.errors.ParserError as exc:
        raise InputError(f"malformed CSV: {exc}") from exc
    frame.columns = [str(c).strip() for c in frame.columns]
    if tuple(frame.columns[:3]) != KEY_COLUMNS or len(frame.columns) < 4:
        raise InputError(
            "header must be 'subject_id,time,count' followed by at least one covariate column, "
            f"got {','.join(frame.columns)}"
        )
    if frame.empty:
        raise InputError("CSV has a header but no rows")
    if frame.columns.duplicated().any():
        raise InputError("duplicate column names in header")
    numeric = frame.columns[1:]
    try:
        frame[numeric] = frame[numeric].apply(pd.to_numeric, errors='raise')
    except (ValueError, TypeError) as exc:
        raise InputError(f"non-numeric value in CSV: {exc}") from exc
    if frame.isna().any().any():
        raise InputError("missing values in CSV")
    return frame


def parse_csv(stream: Source, increments: bool = False) -> Dataset:
    """
    Read a panel-count CSV into a Dataset.

    Subjects appear in order of first appearance; rows of a subject may come
    in any order. Tied times keep the larger cumulative count.

    Raises:
        InputError: empty input, bad header or non-numeric fields.
        ValidationError: covariate drift or decreasing cumulative counts
            within a subject (the message names the subject).
    """
    frame = _read_frame(stream)
    names = tuple(frame.columns[3:])
    subjects = []
    for subject_id, rows in frame.groupby('subject_id', sort=False):
        covariates = rows[list(names)].to_numpy(dtype=float)
        if np.any(covariates != covariates[0]):
            raise ValidationError("covariates change between rows", subject_id=subject_id)
        rows = rows.sort_values(['time', 'count'], kind='mergesort')
        times = rows['time'].to_numpy(dtype=float)
        counts = rows['count'].to_numpy(dtype=float)
        if increments:
            if np.any(counts < 0):
                raise ValidationError("interval counts must be nonnegative", subject_id=subject_id)
            counts = np.cumsum(counts)
        elif np.any(np.diff(counts) < 0):
            raise ValidationError("counts must be cumulative (nondecreasing in time)", subject_id=subject_id)
        try:
            subjects.append(Subject.from_observations(subject_id, covariates[0], times, counts))
        except InputError as exc:
            raise ValidationError(str(exc), subject_id=subject_id) from exc
    data = Dataset(tuple(subjects), names)
    logger.info("read %d subjects, %d observations, %d covariates", data.n, data.n_obs, data.d)
    return data


def read_csv(path: str, increments: bool = False) -> Dataset:
    with open(path, 'r', encoding='utf-8') as f:
        return parse_csv(f, increments=increments)


def write_dataset(data: Dataset, stream: Optional[TextIO] = None) -> str:
    """Write a Dataset in the ingestion schema (cumulative counts); returns the text."""
    frames = []
    for subject in data.subjects:
        block = pd.DataFrame({
            'subject_id': subject.id,
            'time': subject.times,
            'count': subject.counts,
        })
        for name, value in zip(data.covariate_names, subject.z):
            block[name] = value
        frames.append(block)
    text = pd.concat(frames, ignore_index=True).to_csv(index=False, lineterminator='\n')
    if stream is not None:
        stream.write(text)
    return text


# ---------------------------------------------------------------------------
# YAML documents
# ---------------------------------------------------------------------------

def _floats(values) -> List[float]:
    return [float(v) for v in np.asarray(values, dtype=float).ravel()]


def _matrix(values) -> List[List[float]]:
    return [_floats(row) for row in np.atleast_2d(values)]


def _dump(document, stream: Optional[TextIO]) -> str:
    text = yaml.safe_dump(document, sort_keys=False, default_flow_style=None)
    if stream is not None:
        stream.write(text)
    return text


def fit_document(result: FitResult, boot: Optional[BootstrapResult] = None) -> Dict:
    """
    Key-value form of a fit. Inference columns appear only with ``boot``;
    the baseline is the (time, value) step table, checked nondecreasing.
    """
    lam = result.lambda_
    if np.any(np.diff(lam.jumps) <= 0) or np.any(np.diff(lam.values) < 0):
        raise InputError("baseline step table is not nondecreasing")

    names = list(result.covariate_names) or [f"z{j + 1}" for j in range(result.beta.size)]
    rows = wald_test(result.beta, boot.se, names) if boot is not None else None
    coefficients = []
    for j, name in enumerate(names):
        entry = {'name': name, 'beta': float(result.beta[j])}
        if rows is not None:
            entry.update(se=rows[j].se, zstat=rows[j].zstat, pvalue=rows[j].pvalue)
        coefficients.append(entry)

    document = {
        'method': result.method,
        'loglik': float(result.loglik),
        'iterations': int(result.outer_iters),
        'converged': bool(result.converged),
        'coefficients': coefficients,
    }
    if boot is not None:
        document['bootstrap'] = {
            'replicates': boot.n_replicates,
            'failed': int(boot.failed),
            'seed': boot.seed,
            'cov': _matrix(boot.cov),
        }
    document['baseline_mean'] = [[float(t), float(v)] for t, v in zip(lam.jumps, lam.values)]
    return document


def write_fit(result: FitResult, boot: Optional[BootstrapResult] = None, stream: Optional[TextIO] = None) -> str:
    return _dump(fit_document(result, boot), stream)


def write_fits(
    results: Sequence[FitResult],
    boots: Optional[Sequence[Optional[BootstrapResult]]] = None,
    stream: Optional[TextIO] = None,
) -> str:
    """One document holding several fits of the same data (``fit --method both``)."""
    boots = list(boots) if boots is not None else [None] * len(results)
    return _dump({'fits': [fit_document(r, b) for r, b in zip(results, boots)]}, stream)


def summary_document(summaries: Mapping, config, envelopes: Optional[Mapping[str, pd.DataFrame]] = None) -> Dict:
    """Monte Carlo tables per estimator plus optional envelope tables."""
    document = {
        'scenario': int(config.scenario),
        'n': int(config.n),
        'reps': int(config.reps),
        'seed': int(config.seed),
        'beta0': _floats(config.beta0),
        'eta': float(config.fit_cfg.eta),
        'estimators': {},
    }
    for method, summary in summaries.items():
        document['estimators'][method] = {
            'replicates': summary.reps,
            'failed': int(summary.failed),
            'nonconverged': int(summary.nonconverged),
            'bias': _floats(summary.bias),
            'sd': None if summary.sd is None else _floats(summary.sd),
            'ase': None if summary.ase is None else _floats(summary.ase),
            'mse_x100': _floats(100.0 * summary.mse),
            'median_d1': float(np.median(summary.d1)),
        }
        if envelopes and method in envelopes:
            frame = envelopes[method]
            document['estimators'][method]['envelope'] = {
                column: _floats(frame[column]) for column in ('time', 'mean', 'lower', 'upper')
            }
    return document


def write_summary(summaries: Mapping, config, envelopes=None, stream: Optional[TextIO] = None) -> str:
    return _dump(summary_document(summaries, config, envelopes), stream)


def write_asymcov(scenario: int, beta0, n: Optional[int] = None, stream: Optional[TextIO] = None) -> str:
    """Sigma_ps and Sigma for a scenario, and the ASE rows when ``n`` is given."""
    sigma_ps, sigma = scenario_cov(scenario, beta0)
    document = {
        'scenario': int(scenario),
        'beta0': _floats(beta0),
        'sigma_pseudo': _matrix(sigma_ps),
        'sigma': _matrix(sigma),
    }
    if n is not None:
        ase = asymptotic_se(scenario, beta0, n)
        document['n'] = int(n)
        document['ase'] = {method: _floats(values) for method, values in ase.items()}
    return _dump(document, stream)


def load_document(text: str):
    return yaml.safe_load(io.StringIO(text))
