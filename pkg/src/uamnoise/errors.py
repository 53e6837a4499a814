"""Exception hierarchy shared across the package."""


class UamError(Exception):
    """Base class for all package errors."""


class ValidationError(UamError):
    """Bad input data: malformed files, referential-integrity failures,
    out-of-range arguments. CLI exit code 1."""


class NoPathError(ValidationError):
    """Destination unreachable from origin in the corridor network."""


class FitError(ValidationError):
    """Regression fit cannot proceed (rank-deficient design)."""


class SimulationError(UamError):
    """Contract violation or runtime failure inside a running episode.
    CLI exit code 2."""
