"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class ChartError(Exception):
    exit_code = 1


class InvalidInputError(ChartError, ValueError):
    exit_code = 2


class NumericError(ChartError, ArithmeticError):
    """Root finding or Monte Carlo control did not converge."""

    exit_code = 3


class CapacityError(ChartError):
    """The exact expansion would exceed the configured size budget."""

    exit_code = 4
