"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or incomplete model/experiment configuration."""

    def __init__(self, message, missing=None):
        super().__init__(message)
        self.missing = list(missing or [])


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ModelError(RuntimeError):
    """A model produced a non-finite value where a finite one is required."""
