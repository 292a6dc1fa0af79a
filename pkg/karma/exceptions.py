class KarmaError(Exception):
    """Base class for every error raised by karma."""


class InvalidArgumentError(KarmaError, ValueError):
    """Raised when an argument violates an operation's precondition."""


class DomainError(InvalidArgumentError):
    """Raised when a value lies outside a transform's domain."""

    def __init__(self, index: int, message: str):
        self.index = index
        super().__init__(message)


class InvalidModelError(InvalidArgumentError):
    """Raised when model coefficients describe a non-stationary process."""


class TooShortSeriesError(InvalidArgumentError):
    """Raised when a series is too short for the requested model orders."""

    def __init__(self, series_id: str, length: int, required: int):
        self.series_id = series_id
        self.length = length
        self.required = required
        super().__init__(
            f"Series '{series_id}' has {length} observations, "
            f"at least {required} are required"
        )


class DegenerateFitError(KarmaError):
    """Raised when a fitting design is empty or rank-deficient."""


class NumericalDivergenceError(KarmaError):
    """Raised when a residual recursion explodes past the overflow guard."""


class NumericallyDegenerateError(KarmaError):
    """Raised when the Durbin-Levinson recursion meets a unit pivot."""

    def __init__(self, lag: int, message: str):
        self.lag = lag
        super().__init__(message)


class UndefinedAcfError(KarmaError):
    """Raised when autocorrelations are requested for all-zero residuals."""


class AssignmentError(KarmaError):
    """Raised when no live model can evaluate a series."""

    def __init__(self, series_id: str, message: str):
        self.series_id = series_id
        super().__init__(message)


class ClusteringFailureError(KarmaError):
    """Raised when every cluster of a run has vanished."""


class ParseError(KarmaError):
    """Raised when an input file cannot be parsed.

    ``line`` is 1-based; 0 marks whole-file problems such as empty input.
    """

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)
