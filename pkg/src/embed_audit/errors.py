"""Exception types shared across the toolkit."""


class InvalidArgument(ValueError):
    """An argument violated a documented precondition.

    ``field`` names the offending parameter when known, so callers such as
    the CLI can report it.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NumericFailure(ArithmeticError):
    """An optimization produced a non-finite value."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class ParseError(ValueError):
    """A dataset or config file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
