"""Exception hierarchy shared by all modules."""


class LpMklError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(LpMklError, ValueError):
    """Input violates a documented precondition."""


class DegenerateKernelError(LpMklError, ValueError):
    """A kernel carries no usable scale (zero variance, zero norm, ...)."""


class DegenerateModelError(LpMklError, ValueError):
    """No kernel has a strictly positive weight norm."""


class SingularUpdateError(LpMklError, ValueError):
    """Inverse-power update hit a zero norm; drop the kernel and retry."""


class ConvergenceError(LpMklError, RuntimeError):
    """An iteration cap was hit. ``best`` holds the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class StallError(ConvergenceError):
    """The primal objective kept increasing after precision escalation."""
