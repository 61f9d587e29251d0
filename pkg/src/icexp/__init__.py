"""Incentive-compatible treatment selection: models, scoring rules, IC checks and simulation."""

from .errors import ICDesignError
from .outcome_models import Action, ActionProfile, ActionSpace, Family, OutcomeModel
from .scoring import Design, ScoreFunction, Statistic, Transform

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ActionProfile",
    "ActionSpace",
    "Design",
    "Family",
    "ICDesignError",
    "OutcomeModel",
    "ScoreFunction",
    "Statistic",
    "Transform",
]
