"""Errors raised by vicloud.

Every error belongs to one of three families that the command line maps to
exit codes: configuration (1), data (2) and numeric (3).
"""


class VICError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(VICError):
    """A run configuration violates its schema."""

    exit_code = 1

    def __init__(self, field, reason):
        """Store the offending field and why it was rejected."""
        super().__init__(f'{field}: {reason}')
        self.field = field
        self.reason = reason


class DataError(VICError, ValueError):
    """Input data is missing, malformed or violates a dataset invariant."""

    exit_code = 2


class NumericError(VICError, ArithmeticError):
    """A numerical precondition failed."""

    exit_code = 3


class NotPositiveDefiniteError(NumericError):
    """A matrix that must be positive definite is not."""


class SingularMatrixError(NumericError):
    """A matrix that must be inverted is singular or ill-conditioned."""


class DegenerateEllipsoidError(NumericError):
    """An ellipsoid would have a zero radius."""


class SeparationError(NumericError):
    """The outcome is perfectly separated; the logistic MLE does not exist."""


class ConvergenceError(NumericError):
    """An iterative solver hit its iteration limit."""


class RashomonEmptyError(NumericError):
    """Every candidate of a sampling round was eliminated."""

    def __init__(self, round_index, message=None):
        """Record the round in which the sampler ran dry."""
        super().__init__(message or f'all candidates eliminated in round '
                                    f'{round_index}')
        self.round_index = round_index


class ZeroLossError(NumericError):
    """A ratio reliance was requested for a model with zero loss."""


class NoPlateauError(NumericError):
    """Survival rates never stabilised over the tuning candidates."""


class DegenerateStatisticError(NumericError):
    """The variance of a test statistic vanished."""
