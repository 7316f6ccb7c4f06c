"""Exception hierarchy used across the package."""


class MomentError(Exception):
    """Base class for all errors raised by ratmoment."""


class ConfigurationError(MomentError, ValueError):
    """Invalid basis, tableau, scenario or solver configuration."""


class DomainError(MomentError, ValueError):
    """A point lies outside the domain box."""


class InfeasibleDenominatorError(MomentError, ValueError):
    """Q is nonpositive at a node where P carries weight.

    The offending node and the value of Q there are kept on the instance.
    """

    def __init__(self, message, node=None, value=None):
        super().__init__(message)
        self.node = node
        self.value = value


class UnsupportedBasisError(MomentError, ValueError):
    """The requested operation does not apply to this basis family."""


class IllConditionedError(MomentError, ArithmeticError):
    """Newton system too ill-conditioned to solve reliably."""


class RangeError(MomentError, ValueError):
    """A search bracket could not be established."""


class RecoveryError(MomentError, RuntimeError):
    """Atomic recovery failed to reproduce the target moments."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NotInDualConeError(MomentError, ValueError):
    """The moment vector is not strictly inside the dual cone."""
