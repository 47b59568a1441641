"""Exception types shared across the simulator."""


class DomainError(ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ConfigurationError(ValueError):
    """A configuration value (or combination of values) is invalid."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class MetricError(ValueError):
    """A metric is undefined for the supplied data."""


class MaskFormatError(ValueError):
    """An image file could be read but holds no usable data."""
