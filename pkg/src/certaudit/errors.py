"""Exception hierarchy shared by every module."""


class AuditError(Exception):
    """Base class for all errors raised by certaudit."""


class DomainError(AuditError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(AuditError):
    """Incompatible combination of hypothesis class, explanation method or auditor."""


class ProtocolError(AuditError):
    """A query or response violates the DS/auditor protocol (shape, kind, dimension)."""


class DegenerateHypothesisError(AuditError):
    """The hypothesis cannot produce the requested object (e.g. zero weight vector)."""


class UntruthfulDSError(AuditError):
    """The evidence collected so far is inconsistent with every hypothesis.

    Under a truthful data scientist this cannot happen, so it signals either a
    lying DS or a bug.
    """


class RequiresWarmupError(AuditError):
    """Query synthesis needs a non-zero ellipsoid center."""


class UnverifiableError(AuditError):
    """A claim cannot be checked, e.g. the anchor region has no mass under D."""


class ParseError(AuditError, ValueError):
    """Malformed input file or synthetic oracle description."""
