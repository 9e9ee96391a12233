"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad user input: out-of-range values, malformed files, missing splits."""


class ConfigError(ValidationError):
    """Inconsistent configuration (channel schedule, reduction ratio, ...)."""


class ShapeError(ValidationError):
    """Tensor shape violates an operation's contract."""


class NumericsError(RuntimeError):
    """Non-finite values where finite ones are required (NaN/Inf)."""
