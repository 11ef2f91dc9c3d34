"""Exception hierarchy shared by all modules.

Each class carries the CLI exit code it maps to.
"""


class FullSetError(Exception):
    exit_code = 1


class InputError(FullSetError, ValueError):
    """Invalid argument or mismatched shapes."""

    exit_code = 2


class ParseError(FullSetError, ValueError):
    """Malformed file or byte stream."""

    exit_code = 3

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(FullSetError, ArithmeticError):
    exit_code = 4


class DegenerateStateError(NumericError):
    """The state has (numerically) zero norm or an all-zero spectrum."""


class DivergenceError(NumericError):
    """A training sample has zero amplitude, so the loss or gradient diverges."""

    def __init__(self, message, samples=()):
        super().__init__(message)
        self.samples = list(samples)


class NoScalingError(NumericError):
    """Nearest-neighbour distances do not shrink with sample size."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InfeasibleError(FullSetError):
    exit_code = 5


class ImpossibleConditionError(InfeasibleError):
    """Clamped pixels select a slice of (numerically) zero probability."""


class InfeasibleWindowError(InfeasibleError):
    """Energy-window rejection sampling accepts too few draws."""


class ThresholdNotFoundError(InfeasibleError):
    def __init__(self, message, profile=None):
        super().__init__(message)
        self.profile = profile or []
