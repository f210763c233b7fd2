"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions or channel counts do not match what an operation requires."""


class FormatError(ValueError):
    """A byte stream does not conform to the expected file format."""


class ConfigError(ValueError):
    """A configuration value violates its constraints."""


class DegenerateError(ValueError):
    """A computation hit a degenerate input (zero-sum mean, zero-norm embedding, ...)."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
