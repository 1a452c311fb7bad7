from typing import Any


class RoughDyadicError(Exception):
    """Base class for every error raised by roughdyadic."""


class RejectedInputError(RoughDyadicError, ValueError):
    pass


class DimensionMismatchError(RejectedInputError):
    pass


class UnknownCaseError(RejectedInputError):
    pass


class SpecViolationError(RejectedInputError):
    """A rate-check configuration violates the hypotheses of the requested lemma."""


class ConfigError(RoughDyadicError):
    pass


class InsufficientSamplesError(RoughDyadicError):
    pass


class ConvergenceError(RoughDyadicError):
    """Refinement schedule exhausted before successive iterates agreed.

    `previous` and `last` are the iterates of the two finest levels tried.
    """

    def __init__(self, message: str, previous: Any, last: Any, level: int):
        super().__init__(message)
        self.previous = previous
        self.last = last
        self.level = level


class BlowUpError(RoughDyadicError):
    def __init__(self, message: str, time: float, state: Any = None):
        super().__init__(message)
        self.time = time
        self.state = state
