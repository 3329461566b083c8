"""Exception types shared across the package."""


class FracFPError(Exception):
    """Base class for all package errors."""


class NonHermitianSpectrum(FracFPError):
    """Raised when an inverse transform would produce a non-real field."""


class SingularInverse(FracFPError):
    """Raised when a negative Fourier power is applied to a field with nonzero mass."""


class StageBoundExceeded(FracFPError):
    """Raised when a resolvent step exceeds the stage bound and chaining is disabled."""


class NoConvergence(FracFPError):
    """Raised when an iterative solve exhausts its iteration budget.

    The best iterate and its residual are attached so that callers can
    decide whether to accept a partial answer.
    """

    def __init__(self, message, best=None, residual=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations


class DomainError(FracFPError):
    """Raised for arguments outside the domain of a kernel or density."""


class QuadratureFailure(FracFPError):
    """Raised when adaptive quadrature refinement exceeds its budget."""


class NonfiniteState(FracFPError):
    """Raised when a particle state becomes non-finite."""


class ConfigError(FracFPError):
    """Raised for malformed or schema-violating run configurations."""
