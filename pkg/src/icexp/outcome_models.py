"""Parametric outcome families, agent actions and exact outcome sampling.

Agents are indexed from 0 inside the library.  Reports and the CLI print
1-based labels.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    FamilyMismatch,
    InvalidDimensions,
    InvalidParameter,
    UnsupportedAgentCount,
)


class Family(str, Enum):
    NORMAL_MEAN_VAR = "normal_mean_var"
    NORMAL_CURVED = "normal_curved"
    POISSON = "poisson"
    POISSON_FIG1 = "poisson_interference_fig1"
    POISSON_FIG2 = "poisson_interference_fig2"

    @property
    def param_names(self) -> tuple[str, ...]:
        return _PARAM_NAMES[self]

    @property
    def interference(self) -> bool:
        return self in (Family.POISSON_FIG1, Family.POISSON_FIG2)


_PARAM_NAMES = {
    Family.NORMAL_MEAN_VAR: ("mu", "sigma2"),
    Family.NORMAL_CURVED: ("mu",),
    Family.POISSON: ("lam",),
    Family.POISSON_FIG1: ("lam", "lamc"),
    Family.POISSON_FIG2: ("lam", "lamc"),
}


@dataclass(frozen=True)
class Action:
    """A point in an agent's action space; meaning of ``params`` depends on the family."""

    params: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in np.atleast_1d(self.params)))

    def __getitem__(self, i):
        return self.params[i]

    def __len__(self):
        return len(self.params)

    def __str__(self):
        return "(" + ", ".join(f"{p:g}" for p in self.params) + ")"


def as_action(a) -> Action:
    return a if isinstance(a, Action) else Action(tuple(np.atleast_1d(a)))


def check_action(family: Family, alpha: Action) -> None:
    if len(alpha) != len(family.param_names):
        raise FamilyMismatch(
            f"{family.value} actions have parameters {family.param_names}, got {alpha}"
        )
    p = alpha.params
    if not all(np.isfinite(p)):
        raise InvalidParameter(f"non-finite action parameters {alpha}")
    if family is Family.NORMAL_MEAN_VAR and p[1] <= 0:
        raise InvalidParameter(f"sigma2 must be positive, got {p[1]}")
    if family is Family.POISSON and p[0] <= 0:
        raise InvalidParameter(f"lambda must be positive, got {p[0]}")
    if family.interference and (min(p) < 0 or p[0] + p[1] <= 0):
        raise InvalidParameter(f"interference rates must be >= 0 with positive sum, got {alpha}")


def _performance(family: Family, alpha: Action) -> float:
    p = alpha.params
    if family in (Family.NORMAL_MEAN_VAR, Family.NORMAL_CURVED, Family.POISSON):
        return p[0]
    return p[0] + p[1]


def _unit_variance(family: Family, alpha: Action) -> float:
    # variance of one unit's outcome when every agent is a replicate playing alpha
    p = alpha.params
    if family is Family.NORMAL_MEAN_VAR:
        return p[1]
    if family is Family.NORMAL_CURVED:
        return p[0] ** 4
    return _performance(family, alpha)


@dataclass(frozen=True)
class OutcomeModel:
    family: Family
    gamma: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.family.interference:
            if self.gamma is None:
                raise InvalidParameter(f"{self.family.value} requires gamma")
            g = float(self.gamma)
            if not 0.0 <= g < 1.0:
                raise InvalidParameter(f"gamma must lie in [0, 1), got {g}")
            object.__setattr__(self, "gamma", g)
        elif self.gamma is not None:
            raise InvalidParameter(f"gamma is not a parameter of {self.family.value}")

    @property
    def interference(self) -> bool:
        return self.family.interference

    @property
    def n_agents(self) -> int | None:
        return 2 if self.interference else None

    def validate(self, alpha: Action) -> Action:
        alpha = as_action(alpha)
        check_action(self.family, alpha)
        return alpha

    def performance(self, alpha) -> float:
        return performance(self, alpha)

    def unit_variance(self, alpha) -> float:
        return _unit_variance(self.family, self.validate(alpha))


def performance(model: OutcomeModel, alpha) -> float:
    """Expected outcome of a unit when all agents replicate ``alpha``."""
    return _performance(model.family, model.validate(alpha))


@dataclass(frozen=True)
class ActionSpace:
    """A finite grid of actions for one agent."""

    family: Family
    grid: tuple[Action, ...]

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        grid = tuple(as_action(a) for a in self.grid)
        if not grid:
            raise InvalidDimensions("action grid must be non-empty")
        for a in grid:
            check_action(self.family, a)
        object.__setattr__(self, "grid", grid)

    @classmethod
    def of(cls, family, points: Iterable) -> "ActionSpace":
        return cls(Family(family), tuple(as_action(p) for p in points))

    def __len__(self):
        return len(self.grid)

    def __iter__(self):
        return iter(self.grid)

    def __getitem__(self, i):
        return self.grid[i]

    @cached_property
    def performances(self) -> np.ndarray:
        return np.array([_performance(self.family, a) for a in self.grid])

    @cached_property
    def natural_index(self) -> int:
        # np.argmax returns the first maximiser, i.e. lowest index on ties
        return int(np.argmax(self.performances))

    @property
    def natural(self) -> Action:
        return self.grid[self.natural_index]


@dataclass(frozen=True)
class ActionProfile:
    actions: tuple[Action, ...]

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(as_action(a) for a in self.actions))

    @classmethod
    def of(cls, *actions) -> "ActionProfile":
        return cls(tuple(as_action(a) for a in actions))

    def __len__(self):
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def __getitem__(self, i):
        return self.actions[i]

    def replace(self, i: int, alpha) -> "ActionProfile":
        acts = list(self.actions)
        acts[i] = as_action(alpha)
        return ActionProfile(tuple(acts))

    def __str__(self):
        return "[" + ", ".join(str(a) for a in self.actions) + "]"


@dataclass(frozen=True, eq=False)
class Assignment:
    """Agent index per unit, plus the block (or interference group) of each unit."""

    z: np.ndarray
    n: int
    block: np.ndarray | None = None

    @property
    def m(self) -> int:
        return len(self.z)

    @property
    def blocks(self) -> int:
        return 1 if self.block is None else int(self.block.max()) + 1

    def units(self, agent: int, block: int | None = None) -> np.ndarray:
        mask = self.z == agent
        if block is not None:
            mask &= self.block_of_units() == block
        return np.flatnonzero(mask)

    def block_of_units(self) -> np.ndarray:
        return np.zeros(self.m, dtype=int) if self.block is None else self.block


@dataclass(frozen=True, eq=False)
class ObservedOutcomes:
    y: np.ndarray
    assignment: Assignment = field(repr=False)

    def agent_slice(self, agent: int, block: int | None = None) -> np.ndarray:
        return self.y[self.assignment.units(agent, block)]


def _check_dims(m: int, n: int, blocks: int) -> int:
    if m <= 0 or n <= 0 or blocks <= 0 or m % (n * blocks):
        raise InvalidDimensions(f"m={m} must be a positive multiple of n*blocks={n * blocks}")
    return m // (n * blocks)


def sample_assignment(m: int, n: int, blocks: int = 1, rng=None) -> Assignment:
    """Complete randomization within contiguous blocks of ``m // blocks`` units."""
    k = _check_dims(m, n, blocks)
    rng = np.random.default_rng(rng)
    labels = np.repeat(np.arange(n), k)
    z = np.concatenate([rng.permutation(labels) for _ in range(blocks)])
    block = None if blocks == 1 else np.repeat(np.arange(blocks), m // blocks)
    return Assignment(z=z, n=n, block=block)


def enumerate_assignments(m: int, n: int, blocks: int = 1) -> list[tuple[int, ...]]:
    """All balanced assignment vectors, for small ``m``."""
    k = _check_dims(m, n, blocks)
    per_block = sorted(set(itertools.permutations(np.repeat(np.arange(n), k).tolist())))
    return [sum(combo, ()) for combo in itertools.product(per_block, repeat=blocks)]


def cell_rates(model: OutcomeModel, profile: ActionProfile) -> np.ndarray:
    """Poisson rates of the test sets of an interference design.

    Fig1: rates of test sets 1 and 2.  Fig2: rates of cells (G11, G12, G21, G22).
    """
    if not model.interference:
        raise FamilyMismatch("cell rates are defined for interference families only")
    if len(profile) != 2:
        raise UnsupportedAgentCount(f"interference families need 2 agents, got {len(profile)}")
    (l1, c1), (l2, c2) = (model.validate(a).params for a in profile)
    g = model.gamma
    if model.family is Family.POISSON_FIG1:
        return np.array([l1 + g * c2, l2 + g * c1])
    return np.array([l1 + g * c2, c2 + g * l1, c1 + g * l2, l2 + g * c1])


def _per_block(profile, blocks: int) -> list[ActionProfile]:
    if isinstance(profile, ActionProfile):
        return [profile] * blocks
    profiles = list(profile)
    if len(profiles) != blocks:
        raise InvalidDimensions(f"expected {blocks} block profiles, got {len(profiles)}")
    return profiles


def sample_outcomes(model: OutcomeModel, assignment: Assignment, profile, rng=None) -> ObservedOutcomes:
    """Draw one outcome per unit given the realized assignment and actions.

    ``profile`` is an ActionProfile, or one profile per block for the
    no-interference families.  For the Fig2 family the assignment's blocks
    are the two unit groups G1, G2.
    """
    rng = np.random.default_rng(rng)
    z = assignment.z
    if model.interference:
        if not isinstance(profile, ActionProfile):
            raise InvalidDimensions("interference families take a single profile")
        if assignment.n != 2 or len(profile) != 2:
            raise UnsupportedAgentCount("interference families need exactly 2 agents")
        rates = cell_rates(model, profile)
        if model.family is Family.POISSON_FIG1:
            if assignment.blocks != 1:
                raise InvalidDimensions("the Fig1 design has a single test set per agent")
            lam = rates[z]
        else:
            if assignment.blocks != 2:
                raise InvalidDimensions("the Fig2 design needs two unit groups")
            lam = rates[2 * assignment.block_of_units() + z]
        return ObservedOutcomes(rng.poisson(lam).astype(float), assignment)

    profiles = _per_block(profile, assignment.blocks)
    for p in profiles:
        if len(p) != assignment.n:
            raise InvalidDimensions(f"profile has {len(p)} agents, assignment has {assignment.n}")
    params = np.array([[model.validate(a).params for a in p] for p in profiles])
    unit_params = params[assignment.block_of_units(), z]
    fam = model.family
    if fam is Family.NORMAL_MEAN_VAR:
        y = rng.normal(unit_params[:, 0], np.sqrt(unit_params[:, 1]))
    elif fam is Family.NORMAL_CURVED:
        y = rng.normal(unit_params[:, 0], unit_params[:, 0] ** 2)
    else:
        y = rng.poisson(unit_params[:, 0]).astype(float)
    return ObservedOutcomes(y, assignment)


def units_per_cell(model: OutcomeModel, m: int, n: int, blocks: int = 1) -> int:
    """Units behind each cell mean: per agent and block, or per Fig2 test set."""
    if model.family is Family.POISSON_FIG2:
        if n != 2 or blocks != 1 or m % 4:
            raise InvalidDimensions("the Fig2 design needs n=2, one block and m divisible by 4")
        return m // 4
    if model.interference and (n != 2 or blocks != 1):
        raise InvalidDimensions("the Fig1 design needs n=2 and one block")
    return _check_dims(m, n, blocks)


def sample_cell_means(model: OutcomeModel, profile: ActionProfile, k: int, size: int, rng) -> np.ndarray:
    """Sample the per-cell sample means of ``size`` independent experiments.

    Draws the sufficient statistic directly: a sum of ``k`` iid Poisson(rate)
    is Poisson(k*rate) and a mean of ``k`` iid normals is normal, so the
    result has exactly the law of averaging ``k`` unit outcomes.
    Returns shape (size, cells); cells = n agents, or the 4 Fig2 test sets.
    ``rng`` may be one generator per cell, which keeps a cell's draws fixed
    when only other cells' parameters change.
    """
    if model.interference:
        rates = cell_rates(model, profile)
        loc, scale, poisson = k * rates, None, True
    else:
        params = np.array([model.validate(a).params for a in profile])
        if model.family is Family.NORMAL_MEAN_VAR:
            loc, scale, poisson = params[:, 0], np.sqrt(params[:, 1] / k), False
        elif model.family is Family.NORMAL_CURVED:
            loc, scale, poisson = params[:, 0], params[:, 0] ** 2 / np.sqrt(k), False
        else:
            loc, scale, poisson = k * params[:, 0], None, True
    cells = len(loc)
    if isinstance(rng, np.random.Generator):
        if poisson:
            return rng.poisson(loc, size=(size, cells)) / k
        return rng.normal(loc, scale, size=(size, cells))
    if len(rng) != cells:
        raise InvalidDimensions(f"need {cells} generators, got {len(rng)}")
    out = np.empty((size, cells))
    for c, g in enumerate(rng):
        out[:, c] = g.poisson(loc[c], size) / k if poisson else g.normal(loc[c], scale[c], size)
    return out


def sample_replicate_outcomes(model: OutcomeModel, alpha, size: int, rng) -> np.ndarray:
    """Single-unit outcomes when every agent is a replicate playing ``alpha``.

    Replicates are the same agent, so no interference discount applies and the
    Poisson rate is lam + lamc for the interference families.
    """
    alpha = model.validate(alpha)
    mean = _performance(model.family, alpha)
    if model.family in (Family.NORMAL_MEAN_VAR, Family.NORMAL_CURVED):
        return rng.normal(mean, np.sqrt(_unit_variance(model.family, alpha)), size=size)
    return rng.poisson(mean, size=size).astype(float)


def natural_profile(spaces: Sequence[ActionSpace]) -> ActionProfile:
    return ActionProfile(tuple(s.natural for s in spaces))
