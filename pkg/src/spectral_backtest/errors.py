"""Exception and warning types shared across the package."""


class BacktestError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 4


class DomainError(BacktestError, ValueError):
    """An argument lies outside the domain of a function."""

    exit_code = 2


class ConvergenceError(BacktestError, ArithmeticError):
    """An iterative numerical method failed to converge."""


class DivergentMoment(BacktestError, ArithmeticError):
    """A kernel moment is infinite or could not be integrated."""


class UnsupportedCombination(BacktestError):
    """A requested kernel combination has no supported representation."""


class SingularCovariance(BacktestError, ArithmeticError):
    """A covariance matrix is numerically singular."""


class SingularH(SingularCovariance):
    """The regressor second-moment matrix of an MD test is singular."""


class WindowTooLow(DomainError):
    """The lower end of the window is below the score-test admissibility bound."""


class OptimizationFailure(BacktestError, ArithmeticError):
    """Maximum likelihood estimation did not converge."""


class FitFailure(BacktestError, ArithmeticError):
    """Nonlinear least-squares fit of the back-out curve did not converge."""


class DataError(BacktestError):
    """Input data could not be used."""

    exit_code = 3


class ParseError(DataError):
    """A CSV row could not be parsed."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class SchemaError(DataError):
    """Required CSV columns are missing."""


class MissingFields(DataError):
    """A record lacks the fields required by an operation."""


class ConfigError(BacktestError):
    """A run configuration is invalid."""

    exit_code = 2


class DegenerateSampleWarning(UserWarning):
    """Every transformed observation takes the same value."""


class SingularCovarianceWarning(UserWarning):
    """A kernel covariance matrix is numerically singular."""
