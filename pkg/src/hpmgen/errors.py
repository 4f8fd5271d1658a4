"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad configuration, arguments, or shapes; rejected before any work."""


class OracleError(RuntimeError):
    """Finite-difference solve failed (e.g. reaction blow-up mid-march)."""


class TrainingError(RuntimeError):
    """Training aborted (e.g. non-finite loss); message carries the position."""
