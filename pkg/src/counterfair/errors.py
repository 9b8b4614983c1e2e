"""Exception types shared across the package.

The CLI maps each class to a distinct process exit code, so raising the
right type matters more than the message text.
"""


class CounterfairError(Exception):
    """Base class for all package errors."""


class ConfigError(CounterfairError):
    """Invalid configuration: bad JSON, unknown keys, out-of-range values."""


class DataError(CounterfairError):
    """Unusable input data: unreadable files, malformed rows, empty tables."""


class AllUnmatchedError(CounterfairError):
    """No admissible candidate pairs survive the caliper.

    Raised when every minority-group row has an empty candidate list, which
    means the two groups differ too severely for counterpart analysis.
    """


class NumericalError(CounterfairError):
    """Numerical failure such as divergence during metric learning."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
