"""Exception and warning classes shared across the simulation modules."""


class CdwLabError(Exception):
    """Base class for every error raised by cdw_lab."""


class InvalidParameterError(CdwLabError, ValueError):
    pass


class InfeasiblePackingError(CdwLabError, ValueError):
    """The requested minimum gap cannot fit ``n`` sites on the grid."""


class DegenerateGapError(CdwLabError, ZeroDivisionError):
    pass


class DivergenceError(CdwLabError, FloatingPointError):
    """A phase integration left the finite range.

    ``step`` is the index of the step that produced the bad state and
    ``state`` holds the last finite state, for diagnostics.
    """

    def __init__(self, message, step=None, state=None):
        super().__init__(message)
        self.step = step
        self.state = state


class BlowUpError(DivergenceError):
    """Wavefunction norm grew past the allowed multiple of its start value."""


class SolverSingularError(CdwLabError, ZeroDivisionError):
    pass


class UnknownFrequencyError(CdwLabError, KeyError):
    pass


class UnresolvedThresholdError(CdwLabError, RuntimeError):
    pass


class GridTooSmallError(CdwLabError, ValueError):
    pass


class InvalidStateError(CdwLabError, ValueError):
    pass


class QuadratureUnderresolvedError(CdwLabError, RuntimeError):
    pass


class ConfigError(CdwLabError, ValueError):
    """Bad run configuration; ``key`` and ``line`` locate the problem when known."""

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line


class RankDeficiencyWarning(UserWarning):
    pass
