"""Exception types shared across the package."""


class SepcovError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(SepcovError):
    """Operands have incompatible shapes."""


class NotSymmetric(SepcovError):
    """Matrix asymmetry exceeds the accepted tolerance."""


class NotPositiveDefinite(SepcovError):
    """Matrix has a negative eigenvalue beyond rounding tolerance."""


class EigFailure(SepcovError):
    """Eigendecomposition or SVD did not converge."""


class KronCapExceeded(SepcovError):
    """Refused to materialize a Kronecker product above the size cap."""


class NearDegenerateEigenvalues(SepcovError):
    """Eigenvalue gap too small for the Vandermonde gradient formulas."""


class NonConjugatePrior(SepcovError):
    """Gibbs updates require inverse-Wishart priors on both factors."""


class ConfigError(SepcovError):
    """Invalid sampler or run configuration."""
