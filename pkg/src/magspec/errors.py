"""Exception types raised by magspec."""


class MagspecError(Exception):
    """Base class for all magspec errors."""


class ConfigError(MagspecError, ValueError):
    """Raised when a model or run configuration is invalid."""


class NonHermitianError(MagspecError, ValueError):
    """Raised when a Hermitian operation receives a non-Hermitian matrix.

    The measured asymmetry ``max|K - K^*|`` is kept in ``asymmetry``.
    """

    def __init__(self, msg, asymmetry):
        super().__init__(msg)
        self.asymmetry = asymmetry


class NumericalError(MagspecError, ArithmeticError):
    """Raised when a computation cannot be carried out to its tolerance."""


class SpectrumProximityError(NumericalError):
    """Raised when a spectral parameter ``z`` is too close to the spectrum."""

    def __init__(self, msg, distance):
        super().__init__(msg)
        self.distance = distance


class PositivityError(NumericalError):
    """Raised when a shifted Hamiltonian fails to be positive definite."""

    def __init__(self, msg, min_eigenvalue):
        super().__init__(msg)
        self.min_eigenvalue = min_eigenvalue
