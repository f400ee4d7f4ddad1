"""
Exception hierarchy for the DMVI engine.
"""

from typing import Optional


class DMVIError(Exception):
    """Base class for every error raised by this package"""


class ConfigurationError(DMVIError, ValueError):
    """Invalid configuration or tensor shape"""


class ParameterError(DMVIError, ValueError):
    """Invalid distribution parameters"""


class DomainError(DMVIError, ValueError):
    """Bijector evaluated outside its domain"""


class NumericFailureError(DMVIError, FloatingPointError):
    """A value or gradient became NaN or infinite"""

    def __init__(self, message: str, where: Optional[str] = None):
        super().__init__(message if where is None else f"{message} ({where})")
        self.where = where


class TrainingError(DMVIError):
    """Numeric failure during the optimization loop"""

    def __init__(self, message: str, step: int, last_objective: Optional[float]):
        super().__init__(f"{message} at step {step} (last finite objective: {last_objective})")
        self.step = step
        self.last_objective = last_objective


class CheckpointError(DMVIError):
    """Unreadable or incompatible guide checkpoint"""
