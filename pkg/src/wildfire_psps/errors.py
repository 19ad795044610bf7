"""Exception hierarchy shared by all modules."""


class PspsError(Exception):
    """Base class for library errors."""


class ParseError(PspsError):
    pass


class ValidationError(PspsError):
    pass


class UnknownBus(PspsError, KeyError):
    pass


class InvalidParams(ValidationError):
    pass


class EmptyInput(PspsError, ValueError):
    pass


class InconsistentTree(ValidationError):
    pass


class InvalidAnchor(PspsError, ValueError):
    pass


class DimensionMismatch(PspsError, ValueError):
    pass


class BackendError(PspsError):
    """Solver failure or unexpected solver status."""


class CutGenerationError(PspsError):
    pass


class SizeGuard(PspsError):
    """Instance too large for the monolithic oracle."""


class InfeasiblePlan(PspsError):
    pass


class ConfigError(PspsError):
    pass


class IoError(PspsError, OSError):
    """Failure writing report artifacts."""
