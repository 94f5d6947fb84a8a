"""Exception types shared across the package."""


class HistentError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(HistentError):
    """A run configuration is malformed (unknown key, bad value, bad schema)."""


class InvariantViolation(HistentError):
    """A mathematical invariant that must hold by construction was violated."""


class ClassCapExceeded(HistentError):
    """The exact pipeline would enumerate more classes than the configured cap."""


class ConvergenceError(HistentError):
    """An iterative solver failed to reach the requested tolerance."""

    def __init__(self, message: str, best_residual: float | None = None):
        super().__init__(message)
        self.best_residual = best_residual
