"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (bad patch sizes, shape mismatch
    between checkpoints, unknown keys, ...)."""


class DimensionError(ValueError):
    """Array arguments whose shapes do not line up."""


class IntegrityError(RuntimeError):
    """Corrupt or truncated on-disk artifact (checkpoint, video file)."""
