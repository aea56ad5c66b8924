# -*- coding: utf-8 -*-
"""
Exception types shared by the estimation, inference and I/O modules.
"""

from __future__ import annotations

from typing import Optional, Sequence


class PanelCountError(Exception):
    """Base class for every error raised by this package."""


class InputError(PanelCountError, ValueError):
    """Raised for malformed arguments, dimension mismatches and empty inputs."""


class DomainError(InputError):
    """Raised when a function is evaluated outside its domain."""


class ValidationError(InputError):
    """Raised when ingested panel rows violate the data model."""

    def __init__(self, message: str, subject_id: Optional[str] = None):
        if subject_id is not None:
            message = f"subject {subject_id!r}: {message}"
        super().__init__(message)
        self.subject_id = subject_id


class NumericalError(PanelCountError, ArithmeticError):
    """Raised for singular systems (Hessian, covariance matrices)."""


class DivergenceError(NumericalError):
    """Raised when a Newton iterate leaves the admissible beta box."""

    def __init__(self, message: str, beta: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.beta = None if beta is None else list(beta)


class NonIdentifiableError(DivergenceError):
    """Raised when the data cannot separate beta from the baseline (flat profile ridge)."""


class StagnationError(NumericalError):
    """Raised when the ICM line search cannot find an ascent step."""

    def __init__(self, message: str, iteration: int, loglik: float, step: float):
        super().__init__(f"{message} (iteration={iteration}, loglik={loglik:.10g}, step={step:.3g})")
        self.iteration = iteration
        self.loglik = loglik
        self.step = step


class InferenceError(PanelCountError):
    """Raised when too many bootstrap or Monte Carlo replicates fail."""

    def __init__(self, message: str, failed: int = 0, total: int = 0):
        super().__init__(f"{message} ({failed}/{total} replicates failed)")
        self.failed = failed
        self.total = total
