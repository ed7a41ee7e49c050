"""Exception types shared by every stage.

``ConfigError`` maps to CLI exit code 1, ``DataError`` to exit code 2.
"""


class ConfigError(ValueError):
    """Invalid or unsupported configuration."""


class DataError(ValueError):
    """Malformed, missing or inconsistent input data."""
