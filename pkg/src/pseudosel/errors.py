"""Exception hierarchy.

Validation problems and numerical failures are kept apart so the CLI can map
them onto distinct exit codes.
"""


class PseudoselError(Exception):
    """Base class for all package errors."""


class DataValidationError(PseudoselError, ValueError):
    """Malformed input data, manifest or configuration."""


class NumericalError(PseudoselError, ArithmeticError):
    """A numerical procedure failed (singular matrix, divergence, ...)."""


class SingularMatrixError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class SeparationError(NumericalError):
    """Unpenalized logistic refit has no finite maximizer."""

    def __init__(self, message, experiment=None):
        super().__init__(message)
        self.experiment = experiment


class SelectionError(NumericalError):
    """Every candidate support failed during model selection."""

    def __init__(self, message, causes=None):
        super().__init__(message)
        self.causes = causes or {}


class StudyError(PseudoselError):
    """Too many replicates failed in a simulation study."""
