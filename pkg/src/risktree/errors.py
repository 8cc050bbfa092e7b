"""Exception hierarchy shared by every risktree module."""


class RiskTreeError(Exception):
    """Base class for all risktree errors."""


class InvalidTreeSpec(RiskTreeError, ValueError):
    pass


class EmptyTree(InvalidTreeSpec):
    pass


class NonPositiveWeight(InvalidTreeSpec):
    pass


class WeightsDoNotSumToOne(InvalidTreeSpec):
    pass


class SpaceMismatch(RiskTreeError, ValueError):
    """An input vector or measure does not live on the expected tree."""


class NotMeasurable(RiskTreeError, ValueError):
    """A vector is not constant on the atoms of the requested time."""


class NotMeasurableEvent(NotMeasurable):
    """An event is not a union of atoms at the requested time."""


class TimeOrderViolation(RiskTreeError, ValueError):
    pass


class EmptyFamily(RiskTreeError, ValueError):
    pass


class EmptyBattery(RiskTreeError, ValueError):
    pass


class MassExceedsOne(RiskTreeError, ValueError):
    pass


class PenaltyNotNormalized(RiskTreeError, ValueError):
    pass


class GridTooLarge(RiskTreeError, ValueError):
    pass


class FactorOutOfRange(RiskTreeError, ValueError):
    pass


class GammaNotGreaterThanOne(RiskTreeError, ValueError):
    pass


class InsufficientNonVacuousPairs(RiskTreeError):
    def __init__(self, found, required, check=""):
        self.found = found
        self.required = required
        super().__init__(f"{check}: only {found} non-vacuous pairs, "
                         f"{required} required")


class PreconditionNotMet(RiskTreeError):
    """A structural hypothesis of the recursivity theorem failed."""

    def __init__(self, message, reports=None):
        super().__init__(message)
        self.reports = reports or []


class ParseError(RiskTreeError, ValueError):
    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)
