# -*- coding: utf-8 -*-
"""
命令行入口 - Command-line interface.

    python -m components.cli fit data.csv --method both --bootstrap 200 --seed 1
    python -m components.cli simulate --config components/presets/scenario1_n100.yaml --jobs 4
    python -m components.cli asymcov --scenario 1 --beta=-1,0.5,1.5 --n 100

Settings are layered: config.py defaults, then a YAML preset (--config),
then explicit command-line flags. Result documents go to stdout or --out;
logging, progress bars and the one-line error diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, fields, replace
from typing import List, Optional, Sequence, Tuple

from config import LOGGING_CONFIG, SCENARIO_CONFIG, get_output_path
from components.estimators import FitConfig, fit_mle, fit_mple
from components.inference import bootstrap_se
from components.panel_io import read_csv, write_asymcov, write_dataset, write_fits, write_summary
from components.simulation import ScenarioConfig, iter_datasets, lambda_envelope, monte_carlo
from utils.errors import InputError, PanelCountError

logger = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad command line; reported with exit status 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_FIELD_TYPES = {
    'method': str,
    'eta': float,
    'max_outer': int,
    'max_inner': int,
    'bootstrap': int,
    'seed': int,
    'jobs': int,
    'increments': bool,
    'scenario': int,
    'n': int,
    'reps': int,
    'beta0': tuple,
    'lambda_slope': float,
}


def _coerce(name: str, value, kind):
    """Convert one preset / flag value to its field type or raise InputError."""
    try:
        if kind is tuple:
            if isinstance(value, (str, bytes)) or not hasattr(value, '__iter__'):
                raise TypeError("expected a list of numbers")
            return tuple(float(v) for v in value)
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError("expected true or false")
            return value
        if isinstance(value, bool) or (kind is str and not isinstance(value, str)):
            raise TypeError(f"expected {kind.__name__}")
        if kind is int and isinstance(value, float):
            if not value.is_integer():
                raise ValueError("expected a whole number")
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name}: invalid value {value!r} ({exc})") from exc


@dataclass(frozen=True)
class RunConfig:
    """
    One CLI run. ``None`` means "use the default of the subcommand"
    (eta is 1e-10 for fit and 1e-6 for simulate).
    """

    method: str = 'mple'
    eta: Optional[float] = None
    max_outer: Optional[int] = None
    max_inner: Optional[int] = None
    bootstrap: int = 0
    seed: int = 0
    jobs: Optional[int] = None
    increments: bool = False
    scenario: int = 1
    n: int = 100
    reps: int = 100
    beta0: Tuple[float, ...] = SCENARIO_CONFIG['beta0']
    lambda_slope: float = SCENARIO_CONFIG['lambda_slope']

    def __post_init__(self):
        for name, kind in _FIELD_TYPES.items():
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _coerce(name, value, kind))
        if self.method not in ('mple', 'mle', 'both'):
            raise InputError(f"method must be mple, mle or both, got {self.method!r}")
        if self.bootstrap < 0 or self.bootstrap == 1:
            raise InputError(f"bootstrap must be 0 or >= 2, got {self.bootstrap}")
        if self.jobs is not None and self.jobs < 1:
            raise InputError("jobs must be >= 1")

    @property
    def methods(self) -> Tuple[str, ...]:
        return ('mple', 'mle') if self.method == 'both' else (self.method,)

    def fit_config(self, monte_carlo: bool = False) -> FitConfig:
        overrides = {k: getattr(self, k) for k in ('eta', 'max_outer', 'max_inner') if getattr(self, k) is not None}
        return FitConfig.for_monte_carlo(**overrides) if monte_carlo else replace(FitConfig(), **overrides)

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(
            scenario=self.scenario,
            n=self.n,
            reps=self.reps,
            beta0=self.beta0,
            lambda_slope=self.lambda_slope,
            seed=self.seed,
            fit_cfg=self.fit_config(monte_carlo=True),
            methods=self.methods,
            n_jobs=self.jobs,
        )

    def merged(self, values: dict) -> "RunConfig":
        """Copy with the non-None entries of ``values`` applied."""
        names = {f.name for f in fields(self)}
        unknown = sorted(set(values) - names)
        if unknown:
            raise InputError(f"unknown configuration keys: {', '.join(unknown)}")
        return replace(self, **{k: v for k, v in values.items() if v is not None})


def load_run_config(path: str) -> dict:
    """Read a YAML preset into a dict of RunConfig fields."""
    import yaml

    path = os.path.abspath(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"Config file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise InputError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError("config file must contain a single YAML mapping")
    if 'beta0' in data and isinstance(data['beta0'], (list, tuple)):
        data['beta0'] = tuple(data['beta0'])
    return data


def _beta_list(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(','))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='panelcount', description="比例均值模型 - proportional mean model for panel count data")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', '-v', action='count', default=0, help="INFO (-v) or DEBUG (-vv) logging")
    verbosity.add_argument('--quiet', '-q', action='store_true', help="errors only, no progress bars")
    sub = parser.add_subparsers(dest='command', required=True, parser_class=_Parser)

    p_fit = sub.add_parser('fit', help="fit a panel-count CSV")
    p_fit.add_argument('path', help="CSV with header subject_id,time,count,z1,...")
    p_fit.add_argument('--config', '-c', help="YAML preset")
    p_fit.add_argument('--method', choices=('mple', 'mle', 'both'), default=None)
    p_fit.add_argument('--eta', type=float, default=None, help="relative convergence tolerance")
    p_fit.add_argument('--max-outer', type=int, default=None)
    p_fit.add_argument('--max-inner', type=int, default=None)
    p_fit.add_argument('--bootstrap', type=int, default=None, metavar='B', help="bootstrap replicates (0 = none)")
    p_fit.add_argument('--seed', type=int, default=None)
    p_fit.add_argument('--jobs', type=int, default=None, help="worker processes for bootstrap replicates")
    p_fit.add_argument('--increments', action='store_true', default=None, help="counts are per interval, not cumulative")
    p_fit.add_argument('--out', '-o', help="write the result document here instead of stdout")

    p_sim = sub.add_parser('simulate', help="Monte Carlo study of a simulation scenario")
    p_sim.add_argument('--config', '-c', help="YAML preset")
    p_sim.add_argument('--scenario', type=int, choices=(1, 2), default=None)
    p_sim.add_argument('--n', type=int, default=None)
    p_sim.add_argument('--reps', type=int, default=None)
    p_sim.add_argument('--seed', type=int, default=None)
    p_sim.add_argument('--method', choices=('mple', 'mle', 'both'), default=None)
    p_sim.add_argument('--eta', type=float, default=None)
    p_sim.add_argument('--jobs', type=int, default=None, help="worker processes for replicates")
    p_sim.add_argument(
        '--save-data', nargs='?', const='', metavar='DIR',
        help="also write every replicate dataset as CSV (default directory: output/scenario<S>_n<N>)",
    )
    p_sim.add_argument('--out', '-o', help="write the summary document here instead of stdout")

    p_cov = sub.add_parser('asymcov', help="asymptotic covariance matrices of a simulation scenario")
    p_cov.add_argument('--scenario', type=int, choices=(1, 2), required=True)
    p_cov.add_argument('--beta', type=_beta_list, default=SCENARIO_CONFIG['beta0'], help="b1,b2,b3")
    p_cov.add_argument('--n', type=int, default=None, help="also print ASE rows for this sample size")
    p_cov.add_argument('--out', '-o')
    return parser


def _setup_logging(args) -> None:
    if args.quiet:
        level = logging.ERROR
    elif args.verbose >= 2:
        level = logging.DEBUG
    elif args.verbose == 1:
        level = logging.INFO
    else:
        level = getattr(logging, LOGGING_CONFIG['level'])
    logging.basicConfig(
        level=level,
        format=LOGGING_CONFIG['format'],
        datefmt=LOGGING_CONFIG['datefmt'],
        stream=sys.stderr,
        force=True,
    )


def _run_config(args, keys: Sequence[str]) -> RunConfig:
    run = RunConfig()
    if getattr(args, 'config', None):
        run = run.merged(load_run_config(args.config))
    return run.merged({k: getattr(args, k, None) for k in keys})


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        directory = os.path.dirname(os.path.abspath(out))
        os.makedirs(directory, exist_ok=True)
        with open(out, 'w', encoding='utf-8') as f:
            f.write(text)
        logger.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _cmd_fit(args) -> None:
    run = _run_config(args, ('method', 'eta', 'max_outer', 'max_inner', 'bootstrap', 'seed', 'jobs', 'increments'))
    if not os.path.isfile(args.path):
        raise FileNotFoundError(f"no such file: {args.path}")
    data = read_csv(args.path, increments=run.increments)
    cfg = run.fit_config()

    results = []
    mple = fit_mple(data, cfg=cfg)
    if 'mple' in run.methods:
        results.append(mple)
    if 'mle' in run.methods:
        results.append(fit_mle(data, cfg=cfg, warm_start=mple))

    boots = None
    if run.bootstrap:
        boots = [
            bootstrap_se(data, r.method, run.bootstrap, run.seed, cfg, n_jobs=run.jobs, progress=not args.quiet)
            for r in results
        ]
    _emit(write_fits(results, boots), args.out)


def _cmd_simulate(args) -> None:
    run = _run_config(args, ('scenario', 'n', 'reps', 'seed', 'method', 'eta', 'jobs'))
    config = run.scenario_config()
    if args.save_data is not None:
        directory = args.save_data or get_output_path(f"scenario{config.scenario}_n{config.n}")
        os.makedirs(directory, exist_ok=True)
        for r, data in enumerate(iter_datasets(config)):
            with open(os.path.join(directory, f"replicate_{r + 1:04d}.csv"), 'w', encoding='utf-8') as f:
                write_dataset(data, f)
    summaries = monte_carlo(config, progress=not args.quiet)
    envelopes = {m: lambda_envelope(s.lambdas) for m, s in summaries.items()}
    _emit(write_summary(summaries, config, envelopes), args.out)


def _cmd_asymcov(args) -> None:
    if len(args.beta) != 3:
        raise InputError(f"--beta needs three values, got {len(args.beta)}")
    _emit(write_asymcov(args.scenario, args.beta, args.n), args.out)


COMMANDS = {
    'fit': _cmd_fit,
    'simulate': _cmd_simulate,
    'asymcov': _cmd_asymcov,
}


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns the exit status (0 ok, 1 failure, 2 usage)."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _setup_logging(args)
    try:
        COMMANDS[args.command](args)
    except (PanelCountError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
