"""Exception types shared across the package."""


class SemcapError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SemcapError):
    """Tensor operation received incompatible shapes."""


class DataError(SemcapError):
    """Malformed or inconsistent input data."""


class ConfigError(SemcapError):
    """Invalid configuration value or combination."""
