"""Exception hierarchy.  Failed *checks* are report content, not exceptions."""


class MonolabError(Exception):
    """Base class."""


class InputError(MonolabError, ValueError):
    """Malformed arguments: dimension mismatch, non-positive parameters."""


class UnsupportedNormError(InputError):
    """Exponent outside (1, inf), where the duality map is set-valued."""


class UnsupportedRepresentationError(MonolabError):
    """Operation is not available for this representation (e.g. GridSup)."""


class DivergenceError(MonolabError):
    """Objective fell below its declared lower bound."""

    def __init__(self, message, best=None, value=None):
        super().__init__(message)
        self.best = best
        self.value = value


class BudgetError(MonolabError):
    """Iteration budget exhausted before the stopping test was met."""

    def __init__(self, message, best=None, value=None):
        super().__init__(message)
        self.best = best
        self.value = value


class DecompositionError(MonolabError):
    """The stationarity remainder does not fit in the eps-ball."""

    def __init__(self, message, decomposition=None):
        super().__init__(message)
        self.decomposition = decomposition
