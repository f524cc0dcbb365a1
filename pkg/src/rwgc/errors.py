"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or input shape."""


class UsageError(RuntimeError):
    """Operation called in a state that does not allow it."""


class DegenerateWarning(UserWarning):
    """Input is degenerate; the result follows the documented fallback."""
