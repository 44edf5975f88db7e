"""Exception types shared across the package."""


class ConfigError(Exception):
    """Raised for malformed, incomplete, or unknown configuration input."""


class SnapshotError(Exception):
    """Raised for unreadable or inconsistent snapshot files."""


class NumericsError(Exception):
    """Raised when a simulation leaves the valid regime (blow-up, NaN)."""


class VacuumError(NumericsError):
    """Raised when the density field loses positivity."""
