"""Exception hierarchy shared by every module in the package."""


class ICDesignError(Exception):
    """Base class for all package errors."""


class InvalidParameter(ICDesignError, ValueError):
    pass


class FamilyMismatch(ICDesignError, ValueError):
    """An action does not belong to the outcome family it was used with."""


class InvalidDimensions(ICDesignError, ValueError):
    pass


class UnsupportedAgentCount(ICDesignError, ValueError):
    pass


class MissingParameter(ICDesignError, ValueError):
    pass


class NoClosedForm(ICDesignError):
    """No closed-form win probability is cataloged for this model/score pair."""


class NoIdentifyingStatistic(ICDesignError):
    """The design has no statistic that identifies agent performances."""


class SingularTransform(ICDesignError, ValueError):
    pass


class InvalidPair(ICDesignError, ValueError):
    pass


class AssumptionViolated(ICDesignError):
    pass


class NotInvertible(ICDesignError, ValueError):
    pass


class InvalidVariance(ICDesignError, ValueError):
    pass


class NotCertified(ICDesignError):
    pass


class SingularC(ICDesignError, ValueError):
    pass


class BudgetExceeded(ICDesignError):
    pass


class ConfigError(ICDesignError):
    """Scenario configuration could not be parsed or validated."""

    def __init__(self, message, line=None, path=None):
        self.message = message
        self.line = line
        self.path = path
        super().__init__(str(self))

    def __str__(self):
        loc = ""
        if self.path is not None:
            loc = f"{self.path}:"
        if self.line is not None:
            loc += f"{self.line}:"
        return f"{loc} {self.message}".strip() if loc else self.message
