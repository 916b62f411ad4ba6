"""Exception hierarchy.

Three families map onto the CLI exit codes: :class:`ConfigError` (bad
parameters, exit 2), :class:`MatrixIOError` / :class:`MatrixParseError`
(unreadable or malformed input, exit 3) and :class:`NumericalError` (a fit or
decomposition that cannot be completed, exit 4).
"""


class CountSplitError(Exception):
    """Base class for all package errors."""


class ConfigError(CountSplitError, ValueError):
    """A parameter is outside its valid range."""


class InvalidEpsilonError(ConfigError):
    pass


class InvalidFractionError(ConfigError):
    pass


class InvalidConfigError(ConfigError):
    pass


class TooFewGenesError(ConfigError):
    pass


class TooFewPointsError(ConfigError):
    pass


class DimensionMismatchError(ConfigError):
    pass


class DegenerateCellError(ConfigError):
    """A cell (row) has zero total count, so its size factor is undefined."""


class MatrixIOError(CountSplitError, OSError):
    pass


class MatrixParseError(CountSplitError, ValueError):
    """A matrix file contains an entry that is not a non-negative integer."""

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        super().__init__(message)
        self.row = row
        self.col = col


class NumericalError(CountSplitError):
    pass


class RankDeficientError(NumericalError):
    pass


class SeparationError(NumericalError):
    """Fitted means under- or overflowed (e.g. an all-zero response)."""


class ThetaDivergedError(NumericalError):
    """The negative binomial dispersion ran past its cap (data look Poisson).

    ``fit`` carries the Poisson-limit fit so callers can fall back to it.
    """

    def __init__(self, message: str, fit=None):
        super().__init__(message)
        self.fit = fit


class UnconvergedFitError(NumericalError):
    pass


class DegenerateMatrixError(NumericalError):
    pass


class ConstantInputError(NumericalError):
    pass


class DegenerateClustersError(NumericalError):
    pass
