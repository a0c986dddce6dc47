"""Exception types shared across the workbench."""


class MonopinnError(Exception):
    """Base class for workbench errors."""


class SingularityError(MonopinnError, ZeroDivisionError):
    """A denominator or Jacobian is too close to zero to divide by."""


class ConvergenceError(MonopinnError, RuntimeError):
    """An iterative solve exhausted its iteration budget."""


class OutOfBoundsError(MonopinnError, ValueError):
    """An input value lies outside the declared physical bounds."""


class ConfigError(MonopinnError, ValueError):
    """An experiment configuration failed schema or consistency checks."""


class TrainingDivergedError(MonopinnError, RuntimeError):
    """Training produced a non-finite loss.

    Carries the epoch of divergence and the last finite parameter set so a
    caller can keep the most recent good checkpoint.
    """

    def __init__(self, epoch, message, last_params=None):
        super().__init__(message)
        self.epoch = epoch
        self.last_params = last_params
