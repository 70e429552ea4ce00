"""Exception hierarchy shared by the toolkit."""


class WienerConeError(Exception):
    """Base class for every error raised by the toolkit."""


class DomainError(WienerConeError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class RejectedPotentialError(WienerConeError, ValueError):
    """The potential fails the nonnegativity or integrability checks."""


class ConvergenceError(WienerConeError, RuntimeError):
    """A numerical procedure did not reach its tolerance."""


class UnsupportedConfigurationError(WienerConeError, ValueError):
    """The requested kernel mode is not available for this cone/potential."""


class NotApplicableError(WienerConeError, ValueError):
    """An estimate was requested outside the regime where it holds."""


class ConditioningError(WienerConeError, RuntimeError):
    """A kernel matrix stayed numerically singular after regularization."""

    def __init__(self, message: str, block: int | None = None):
        super().__init__(message if block is None else f"block {block}: {message}")
        self.block = block


class ConfigError(WienerConeError, ValueError):
    """Invalid or inconsistent run configuration."""
