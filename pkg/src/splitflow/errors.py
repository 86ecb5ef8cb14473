"""Exception types shared across the package."""


class SplitflowError(Exception):
    """Base class for all package-specific errors."""


class DomainError(SplitflowError):
    """An argument violates a documented precondition."""


class SingularTimeError(SplitflowError):
    """Field evaluation requested at a time where sigma^2(t) degenerates."""


class InsufficientSamplesError(SplitflowError):
    """Monte Carlo bin captured too few samples to form an estimate."""

    def __init__(self, message, hits):
        super().__init__(message)
        self.hits = int(hits)


class BlowUpError(SplitflowError):
    """Trajectory integration produced a non-finite state."""

    def __init__(self, message, time):
        super().__init__(message)
        self.time = float(time)


class TrainingDivergenceError(SplitflowError):
    """Training loss became non-finite."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = int(step)
