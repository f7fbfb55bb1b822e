"""Exception hierarchy shared by every module of the package."""


class LiouvilleLabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(LiouvilleLabError, ValueError):
    """Invalid parameters or configuration (caught before any computation)."""


class DomainError(LiouvilleLabError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class UsageError(LiouvilleLabError, ValueError):
    """Inputs that are individually valid but do not fit together."""


class NumericalError(LiouvilleLabError, RuntimeError):
    """A numerical procedure failed (non-convergence, overflow, ...).

    ``diagnostics`` carries whatever the failing routine knew at the time,
    e.g. the last residual of a Newton iteration.
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
