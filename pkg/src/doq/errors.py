"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ConstraintViolation(DomainError):
    """A decision violates a resource constraint (e.g. a trace budget)."""


class UnsupportedError(NotImplementedError):
    """The requested operation is not supported for this input shape."""


class TrainingError(RuntimeError):
    """Neural network training diverged."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
