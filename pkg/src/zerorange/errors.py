class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ResourceError(RuntimeError):
    """Requested computation exceeds a configured size or memory cap."""


class ConsistencyError(RuntimeError):
    """A numerical self-check failed (e.g. a conditional pmf did not normalize)."""


class RegimeWarning(UserWarning):
    """Parameters are outside the regime where an approximation is justified."""


class RegimeError(RuntimeError):
    """An approximate sampler failed because the regime does not support it."""
