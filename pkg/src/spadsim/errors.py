"""Exception types shared across the simulator, each carrying a stable error code.

The CLI maps these onto machine-readable JSON on stderr; library users can
catch them individually.
"""


class SimError(Exception):
    """Base class for all simulator errors."""

    code = "internal"


class ConfigError(SimError):
    """Invalid or inconsistent system configuration."""

    code = "config"


class DomainError(SimError):
    """Argument outside the mathematical domain of an operation."""

    code = "domain"


class ConvergenceError(SimError):
    """Iterative solver failed to converge; carries the final residual."""

    code = "convergence"

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConsistencyError(SimError):
    """An internal identity that must hold numerically was violated."""

    code = "consistency"


class FingerprintError(SimError):
    """Lookup table was built for a different configuration."""

    code = "lut_fingerprint"


class RangeError(SimError):
    """Query outside the hull of a lookup-table axis."""

    code = "range"


class FormatError(SimError):
    """Malformed binary or JSON input file."""

    code = "format"


class LockError(SimError):
    """Output directory is owned by another process."""

    code = "lock"
