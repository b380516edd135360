"""Exception types shared across the package."""


class VsrlabError(Exception):
    """Base class for all package errors."""


class ConfigError(VsrlabError, ValueError):
    """Invalid parameter value, unsupported option, or unknown config key."""


class ShapeError(VsrlabError, ValueError):
    """Shape, bounds, or divisibility violation."""


class ConsistencyError(VsrlabError, ValueError):
    """Structural inconsistency, e.g. an incomplete or duplicated patch grid."""
