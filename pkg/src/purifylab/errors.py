"""Exception types raised across the package."""


class PurifyLabError(ValueError):
    """Base class for all purifylab errors."""


class InvalidDims(PurifyLabError):
    """Matrix or subsystem dimensions are inconsistent."""


class NotHermitian(PurifyLabError):
    """Input matrix is not Hermitian within tolerance."""


class NotPSD(PurifyLabError):
    """Input matrix has an eigenvalue below the negativity tolerance."""


class NotNormalized(PurifyLabError):
    """Operator trace differs from the required normalization."""


class NotUnitary(PurifyLabError):
    """Matrix is not unitary within tolerance."""


class NotTracePreserving(PurifyLabError):
    """Kraus operators do not satisfy the completeness relation."""


class EnvironmentTooSmall(PurifyLabError):
    """Requested environment dimension is below the operator rank."""


class SingularNormalizer(PurifyLabError):
    """Trace-preservation normalizer is numerically singular."""


class InvalidWeights(PurifyLabError):
    """Spectral weight vector violates its constraints."""


class DomainError(PurifyLabError):
    """Scalar argument lies outside the function domain."""


class TooLarge(PurifyLabError):
    """Problem size exceeds the supported dense-storage limit."""
