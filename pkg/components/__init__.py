# -*- coding: utf-8 -*-
"""
估计与推断组件包 - estimators, inference, simulation and I/O.
"""

__all__ = []

try:
    from .estimators import FitConfig, FitResult, fit, fit_mle, fit_mple

    __all__.extend(['FitConfig', 'FitResult', 'fit', 'fit_mle', 'fit_mple'])
except ImportError:
    pass

try:
    from .inference import BootstrapResult, WaldRow, bootstrap_se, wald_test

    __all__.extend(['BootstrapResult', 'WaldRow', 'bootstrap_se', 'wald_test'])
except ImportError:
    pass

try:
    from .simulation import McSummary, ScenarioConfig, monte_carlo

    __all__.extend(['McSummary', 'ScenarioConfig', 'monte_carlo'])
except ImportError:
    pass

try:
    from .panel_io import parse_csv, write_fit

    __all__.extend(['parse_csv', 'write_fit'])
except ImportError:
    pass
