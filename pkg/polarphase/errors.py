"""
Exception hierarchy for polarphase.

Every failure raised by the library derives from PolarPhaseError so callers
(the CLI and the sweep harness) can separate expected numerical outcomes from
programming errors.
"""

from typing import Optional


class PolarPhaseError(Exception):
    """Base class for all library errors."""


class ParameterError(PolarPhaseError, ValueError):
    """Invalid argument, out-of-domain value or dimension mismatch."""


class InfeasibleParametersError(ParameterError):
    """Parameters for which the requested guarantee cannot hold."""


class RetryExhaustedError(PolarPhaseError):
    """A rejection sampler ran out of attempts."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class DegeneracyError(PolarPhaseError):
    """Graph or matrix is degenerate for the requested operation."""


class EdgeIndexError(PolarPhaseError, IndexError):
    """Unknown edge, or measurement data not aligned with the ensemble."""


class ZeroEdgeError(PolarPhaseError, ZeroDivisionError):
    """Attempt to normalize an edge estimate of zero magnitude."""


class ReconstructionInfeasibleError(PolarPhaseError):
    """The surviving frame does not span the signal space."""

    def __init__(self, message: str, sigma_min: Optional[float] = None):
        super().__init__(message)
        self.sigma_min = sigma_min


class UnrecoverableError(PolarPhaseError):
    """A recovery procedure could not produce an estimate.

    The stage attribute names the pipeline step that failed.
    """

    def __init__(self, message: str, stage: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
