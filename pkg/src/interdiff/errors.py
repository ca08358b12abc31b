"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised when a configuration document is malformed or inconsistent."""


class DomainError(ValueError):
    """Raised when a coordinate or scale value falls outside the medium."""


class EstimationError(RuntimeError):
    """Raised when an estimator cannot produce a well-defined value."""


class SolverError(RuntimeError):
    """Raised when a linear solve or time step breaks down."""
