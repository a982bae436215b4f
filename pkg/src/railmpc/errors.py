"""Exception types shared across the package."""


class RailMPCError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(RailMPCError, ValueError):
    pass


class DomainError(RailMPCError, ValueError):
    """An input lies outside the domain where an operation is defined."""


class ModelViolationError(RailMPCError):
    """Passenger bookkeeping produced an impossible (negative) quantity."""


class InfeasibleModelError(RailMPCError):
    """A program is infeasible by construction, or every fallback failed."""


class DimensionMismatchError(RailMPCError, ValueError):
    pass


class ModelFormatError(RailMPCError):
    """A serialized model or dataset file is corrupt or truncated."""


class VersionMismatchError(ModelFormatError):
    pass


class NonFiniteLossError(RailMPCError, FloatingPointError):
    pass
