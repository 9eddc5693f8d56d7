"""Exception types raised across the package."""


class MFDPError(Exception):
    """Base class for all package errors."""


class ContractViolation(MFDPError, ValueError):
    """An input violates a documented precondition."""


class NotPSDError(MFDPError, ValueError):
    """A matrix expected to be positive semidefinite has a negative eigenvalue."""


class ToeplitzSolveError(MFDPError, ArithmeticError):
    """A Toeplitz system could not be solved to the required residual."""


class InvalidSchemaError(MFDPError, ValueError):
    """Participation schema parameters are inconsistent."""


class TooLargeError(MFDPError, ValueError):
    """Exhaustive enumeration was requested beyond its size guard."""


class NonnegativityViolated(MFDPError, ValueError):
    """The Gram matrix has negative entries where the fast path needs them >= 0."""


class RankError(MFDPError, ArithmeticError):
    """A matrix that must be full rank is (numerically) rank deficient."""


class ConvergenceError(MFDPError, RuntimeError):
    """The dual solver hit its iteration cap before certifying the gap.

    Attributes:
        state: best `DualState` found.
        factorization: factorization extracted from the best state, if available.
    """

    def __init__(self, message, state=None, factorization=None):
        super().__init__(message)
        self.state = state
        self.factorization = factorization


class UnsupportedWorkloadError(MFDPError, ValueError):
    """A construction was requested for a workload it cannot factorize."""


class DegenerateError(MFDPError, ValueError):
    """An operation would divide by a zero sensitivity."""


class ConfigurationError(MFDPError, ValueError):
    """A run configuration is internally inconsistent."""


class InternalConsistencyError(MFDPError, ArithmeticError):
    """A computation that should be exact in theory drifted beyond tolerance."""
