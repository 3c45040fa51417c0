"""Exception types shared across paralab."""


class ContractError(ValueError):
    """An input violates an operation's precondition (wrong domain tag, grid mismatch)."""


class ConfigurationError(ValueError):
    """A configuration value is invalid (bad grid period, malformed exponent triple, ...)."""


class ScaleRangeError(ValueError):
    """A dyadic scale lies outside what the filter bank or grid can resolve."""


class CapacityError(MemoryError):
    """A tabulation would exceed the configured memory budget."""


class QuadratureAccuracyError(RuntimeError):
    """Two quadrature resolutions disagree by more than the requested tolerance.

    Attributes
    ----------
    coarse, fine : ndarray
        Results at the requested and at the doubled resolution.
    discrepancy : float
        ``max|fine - coarse| / max|fine|``.
    """

    def __init__(self, message, coarse, fine, discrepancy):
        super().__init__(message)
        self.coarse = coarse
        self.fine = fine
        self.discrepancy = discrepancy
