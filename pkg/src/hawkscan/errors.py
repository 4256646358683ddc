"""Exception hierarchy shared by every module.

The CLI maps :class:`ConfigurationError` to exit code 2 and
:class:`NumericalError` to exit code 3.
"""


class HawkscanError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HawkscanError, ValueError):
    """Invalid arguments, malformed files or inconsistent settings."""


class OrderingError(ConfigurationError):
    """An event arrived earlier than the state it is applied to."""


class CheckpointError(HawkscanError):
    """A requested checkpoint is not retained (window/interval misconfiguration)."""


class NumericalError(HawkscanError, ArithmeticError):
    """A computation produced an invalid value (zero intensity, non-PSD matrix, ...)."""


class CalibrationError(NumericalError):
    """A covariance is too degenerate to be inverted under the eigenvalue floor policy."""
