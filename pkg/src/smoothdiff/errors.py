"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2, data
problems exit 3, numerical aborts exit 4.
"""


class SmoothDiffError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(SmoothDiffError, ValueError):
    """A parameter is outside its documented domain (bad k, t, alpha, ...)."""


class InvalidInputError(SmoothDiffError, ValueError):
    """An input array is malformed: wrong shape, non-finite entries, empty."""


class SingularTimeError(InvalidParameterError):
    """An operation that needs b_t > 0 was called at t = 0."""


class UnsupportedModeError(SmoothDiffError):
    """A sampler mode was requested that the score field cannot support."""


class ConfigError(SmoothDiffError):
    """A run configuration failed to parse or validate."""


class DataError(SmoothDiffError):
    """A dataset or artifact file is missing, unreadable, or malformed."""


class NumericalAbortError(SmoothDiffError):
    """A computation produced non-finite values and was aborted."""
