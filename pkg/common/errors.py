"""
Error types for the CONE-SHAP toolkit.

Every error raised by the library derives from ConeShapError and from the
closest built-in exception, so callers can catch either family.
"""


class ConeShapError(Exception):
    """Base class for all toolkit errors."""


class DomainError(ConeShapError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class PreconditionError(ConeShapError, ValueError):
    """A documented precondition of an operation does not hold."""


class CapacityError(ConeShapError, RuntimeError):
    """An exact computation would exceed its enumeration limit."""


class FormatError(ConeShapError, ValueError):
    """A file or payload does not match the expected format."""


class CapabilityError(ConeShapError, TypeError):
    """A model lacks a capability the operation needs (e.g. a representation layer)."""


class TransportError(ConeShapError, RuntimeError):
    """The adapter process died, closed its pipes, or timed out."""


class ProtocolError(ConeShapError, RuntimeError):
    """The adapter answered with a malformed or mismatched message."""


class UndefinedMetricError(ConeShapError, ArithmeticError):
    """A criterion is undefined for the given inputs (zero variance, no positive scores)."""
