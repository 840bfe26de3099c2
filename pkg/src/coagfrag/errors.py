"""Exception hierarchy shared by all modules."""


class CoagFragError(Exception):
    """Base class for errors raised by coagfrag."""


class ConfigError(CoagFragError, ValueError):
    """Invalid configuration value. ``field`` names the offending entry when known."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class InputError(CoagFragError, ValueError):
    """Invalid input data, e.g. a negative initial density."""


class DomainError(CoagFragError, ValueError):
    """Argument outside the domain of a kernel or bound."""


class NumericalError(CoagFragError, ArithmeticError):
    """Non-finite value produced during integration."""

    def __init__(self, message, cell=None):
        self.cell = cell
        super().__init__(message)


class StiffnessError(NumericalError):
    """Step size fell below the underflow threshold."""
