"""Exception hierarchy shared by every conc-lab module.

Each error carries the process exit code the CLI should return when it
escapes an experiment.
"""

from __future__ import annotations


class ConcLabError(Exception):
    """Base class for all conc-lab failures."""

    exit_code = 1


class InvalidArgument(ConcLabError, ValueError):
    """A numeric argument is outside its documented range."""


class InvalidPoints(ConcLabError, ValueError):
    """Support points are empty, ragged or not finite."""


class EmptySupport(InvalidPoints):
    pass


class DimensionMismatch(ConcLabError, ValueError):
    pass


class InvalidWeights(ConcLabError, ValueError):
    """Weights cannot describe a probability measure."""


class NegativeWeight(InvalidWeights):
    pass


class WeightSumMismatch(InvalidWeights):
    pass


class GridTooLarge(ConcLabError):
    pass


class SizeMismatch(ConcLabError, ValueError):
    pass


class SizeCapExceeded(ConcLabError):
    pass


class EnumerationCapExceeded(SizeCapExceeded):
    pass


class SupportTooLarge(ConcLabError):
    pass


class SolverError(ConcLabError):
    """An exact solver hit its iteration guard."""


class Infeasible(ConcLabError):
    pass


class EventEmpty(ConcLabError):
    pass


class NegativeInput(ConcLabError, ValueError):
    pass


class DisconnectedGraph(ConcLabError):
    pass


class ConfigInvalid(ConcLabError):
    exit_code = 2


class CostSpecError(ConfigInvalid, ValueError):
    """A cost string does not follow `quadratic | power:p=<f> | alpha:p=<f> | sg`."""


class InputMissing(ConcLabError):
    exit_code = 3


class CheckFailed(ConcLabError):
    """An asserted check did not hold; `check` names it."""

    def __init__(self, message: str, check: str | None = None):
        super().__init__(message)
        self.check = check
