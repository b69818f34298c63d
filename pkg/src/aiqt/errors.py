"""Exception hierarchy shared across the package."""


class AiqtError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgumentError(AiqtError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateInputError(AiqtError, ValueError):
    """Input has no usable signal (zero norm, all-zero retained set, ...)."""


class ResourceLimitError(AiqtError, RuntimeError):
    """A cost guard was exceeded (dense oracles, finite-difference checks)."""


class NumericFailureError(AiqtError, ArithmeticError):
    """A non-finite value appeared where finite arithmetic was expected."""

    def __init__(self, message, parameter_index=None):
        super().__init__(message)
        self.parameter_index = parameter_index


class TrainingFailureError(AiqtError, RuntimeError):
    """Training diverged; carries the last finite checkpoint."""

    def __init__(self, message, last_model=None, history=None):
        super().__init__(message)
        self.last_model = last_model
        self.history = history
