class KerrPairError(Exception):
    """Base class for all package errors."""


class ConfigurationError(KerrPairError, ValueError):
    """Invalid basis, parameters, or run configuration."""


class IntegrationError(KerrPairError, RuntimeError):
    """The master-equation integrator gave up.

    ``last_t`` is the last time reached with an accepted step.
    """

    def __init__(self, message: str, last_t: float):
        super().__init__(f"{message} (last good t={last_t:.6g})")
        self.last_t = last_t


class DecompositionError(KerrPairError, ValueError):
    """Correlation kernel is not Hermitian / PSD within tolerance."""


class UndefinedFidelityError(KerrPairError, ValueError):
    """Post-selection probability too small to define a conditional state."""


class FitError(KerrPairError, ValueError):
    """Rank-deficient or under-determined least-squares problem."""
