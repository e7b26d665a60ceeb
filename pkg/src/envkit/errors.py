class EnvkitError(Exception):
    """Base class for all library errors."""


class DimensionError(EnvkitError, ValueError):
    pass


class NormError(EnvkitError, ValueError):
    pass


class ValidationError(EnvkitError, ValueError):
    """Operator fails a structural check (hermitian, unitary, projector, density)."""


class CommutationError(EnvkitError, ValueError):
    """The operator does not commute with the reduced density, so no twin exists."""


class NotCertifiableError(EnvkitError, ValueError):
    """Two vectors do not share a positive-eigenvalue eigen-subspace."""


class CertificationError(EnvkitError, ArithmeticError):
    """A construction that should satisfy an identity failed its numerical check."""
