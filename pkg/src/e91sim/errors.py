"""Exception hierarchy shared by all e91sim modules."""


class E91Error(Exception):
    """Base class for every error raised by this package."""


class ConfigError(E91Error, ValueError):
    """Invalid station, session or file configuration.

    ``line`` is set when the problem can be traced to a line of a config file.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientData(E91Error):
    """A statistic was requested from tallies that cannot support it."""


class DomainError(E91Error, ValueError):
    """Argument outside the domain of a density or closed form."""


class QuadratureFailure(E91Error, ArithmeticError):
    """Adaptive quadrature did not reach its error target."""


class DegenerateScenario(E91Error):
    """Configuration produces no coincidences, so no correlation exists."""
