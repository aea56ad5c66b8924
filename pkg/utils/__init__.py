# -*- coding: utf-8 -*-
"""
工具模块包 - data model, isotonic regression and quadrature helpers.
"""

from .errors import (
    DivergenceError,
    DomainError,
    InferenceError,
    InputError,
    NonIdentifiableError,
    NumericalError,
    PanelCountError,
    StagnationError,
    ValidationError,
)

__all__ = [
    'PanelCountError', 'InputError', 'DomainError', 'ValidationError', 'NumericalError',
    'DivergenceError', 'NonIdentifiableError', 'StagnationError', 'InferenceError',
]

try:
    from .panel_data import Dataset, MonotoneStepFunction, Subject, Theta
    __all__.extend(['Dataset', 'MonotoneStepFunction', 'Subject', 'Theta'])
except ImportError:
    pass

try:
    from .isotonic_utils import WeightedSeries, pava
    __all__.extend(['WeightedSeries', 'pava'])
except ImportError:
    pass

try:
    from .quadrature_utils import ProductRule, scenario_covariate_rule
    __all__.extend(['ProductRule', 'scenario_covariate_rule'])
except ImportError:
    pass
