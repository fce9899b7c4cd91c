"""Semantic exception hierarchy shared across the package."""


class FusionRobustError(Exception):
    """Base class for all package errors."""


class ShapeError(FusionRobustError, ValueError):
    """Array dimensions do not match an operation's contract."""


class ConfigurationError(FusionRobustError, ValueError):
    """An option, hyperparameter, or config field is invalid."""


class PreconditionError(FusionRobustError, ValueError):
    """A documented precondition of an operation was violated."""


class StateError(FusionRobustError, RuntimeError):
    """An operation was invoked in the wrong order (e.g. backward before forward)."""


class ConvergenceError(FusionRobustError, RuntimeError):
    """A numeric solver failed to converge; carries the last iterate."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class TrainingDivergedError(FusionRobustError, RuntimeError):
    """Training loss became non-finite; carries the iteration index."""

    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration
