"""Exception types shared across the package."""


class JCHError(Exception):
    """Base class for all package errors."""


class EmptySectorError(JCHError, ValueError):
    """Requested charge sector has no states at the given truncation."""


class DimensionLimitError(JCHError):
    """A dense or sparse problem exceeds the configured size guard."""


class ConvergenceError(JCHError):
    """An iterative solve did not reach its tolerance."""


class OrthogonalStatesError(JCHError, ValueError):
    """Ground-state overlap vanished while computing a fidelity."""


class ConfigError(JCHError, ValueError):
    """Run configuration failed validation."""
