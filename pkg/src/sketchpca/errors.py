"""Error taxonomy shared by all modules.

The CLI maps these onto exit codes: usage/dimension errors -> 2,
data/domain errors -> 3, numerical failures -> 4.
"""


class UsageError(ValueError):
    """An operation was called in a way that makes no sense (wrong method,
    bad flag combination, malformed configuration)."""


class DimensionError(UsageError):
    """Shapes or counts are incompatible (k out of range, r > n, ...)."""


class DataError(ValueError):
    """Input values are unacceptable: non-finite entries, ragged files,
    non-PSD covariance, constant columns."""


class DomainError(DataError):
    """A numeric argument lies outside the mathematical domain of the
    requested transform (e.g. a spectral point inside the bulk)."""


class NumericalError(RuntimeError):
    """An iterative routine failed to converge or lost all admissible
    branches; carries diagnostic detail in the message."""
