"""Monte Carlo engine for the treatment-selection game."""

from __future__ import annotations

import hashlib
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .asymptotics import ICCertificate, Method, Verdict, Witness
from .errors import BudgetExceeded, InvalidDimensions
from .outcome_models import (
    ActionProfile,
    ActionSpace,
    Family,
    OutcomeModel,
    sample_assignment,
    sample_cell_means,
    sample_outcomes,
    units_per_cell,
)
from .rng import substream
from .scoring import (
    SCALED_SQRT,
    IDENTITY,
    ScoreFunction,
    Statistic,
    Transform,
    apply_transform,
    declare_winner,
    statistic_from_cell_means,
    winners,
)

CHUNK = 8192


class Aggregation(str, Enum):
    SUMMED = "summed"
    MAJORITY = "majority"


@dataclass(frozen=True)
class Scenario:
    """Model, design and dimensions of one experiment.

    ``spaces[b][i]`` is agent i's action space in block b.
    """

    model: OutcomeModel
    score_fn: ScoreFunction
    spaces: tuple[tuple[ActionSpace, ...], ...]
    m: int
    n: int
    blocks: int = 1
    aggregation: Aggregation = Aggregation.SUMMED

    def __post_init__(self):
        object.__setattr__(self, "aggregation", Aggregation(self.aggregation))
        spaces = tuple(tuple(b) for b in self.spaces)
        object.__setattr__(self, "spaces", spaces)
        if len(spaces) != self.blocks or any(len(b) != self.n for b in spaces):
            raise InvalidDimensions(f"need {self.blocks} block(s) of {self.n} action spaces")
        for b in spaces:
            for s in b:
                if s.family is not self.model.family:
                    raise InvalidDimensions(f"action space family {s.family.value} != model {self.model.family.value}")
        if self.model.interference and (self.n != 2 or self.blocks != 1 or self.m % 4):
            raise InvalidDimensions("interference scenarios need n=2, one block and m divisible by 4")
        units_per_cell(self.model, self.m, self.n, self.blocks)
        self.score_fn.check(self.model)

    @classmethod
    def single(cls, model: OutcomeModel, score_fn: ScoreFunction, profile: ActionProfile, k: int) -> "Scenario":
        """One-block scenario with singleton spaces at ``profile``.

        ``k`` is units per agent, or units per test set for the Fig2 design.
        """
        n = len(profile)
        m = 4 * k if model.family is Family.POISSON_FIG2 else n * k
        spaces = (tuple(ActionSpace(model.family, (a,)) for a in profile),)
        return cls(model, score_fn, spaces, m, n)

    @property
    def k(self) -> int:
        """Units per agent per block."""
        return self.m // (self.n * self.blocks)

    @property
    def cell_k(self) -> int:
        return units_per_cell(self.model, self.m, self.n, self.blocks)

    def natural_profiles(self) -> list[ActionProfile]:
        return [ActionProfile(tuple(s.natural for s in b)) for b in self.spaces]

    def with_units(self, m: int) -> "Scenario":
        return Scenario(self.model, self.score_fn, self.spaces, m, self.n, self.blocks, self.aggregation)

    def with_transform(self, t: Transform) -> "Scenario":
        sf = ScoreFunction(self.score_fn.statistic, t)
        return Scenario(self.model, sf, self.spaces, self.m, self.n, self.blocks, self.aggregation)


def _profiles(scenario: Scenario, profiles) -> list[ActionProfile]:
    if profiles is None:
        return scenario.natural_profiles()
    if isinstance(profiles, ActionProfile):
        profiles = [profiles] * scenario.blocks
    profiles = list(profiles)
    if len(profiles) != scenario.blocks or any(len(p) != scenario.n for p in profiles):
        raise InvalidDimensions("profile dimensions do not match the scenario")
    return profiles


def _agent_stat(scenario: Scenario, means: np.ndarray) -> np.ndarray:
    sf = scenario.score_fn
    if scenario.model.family is Family.POISSON_FIG2 and sf.statistic is Statistic.SAMPLE_MEAN:
        # pool each agent's two equal-size test sets
        return 0.5 * (means[:, [0, 1]] + means[:, [2, 3]])
    return statistic_from_cell_means(sf, means, scenario.model.gamma)


def _aggregate(scenario: Scenario, block_scores, tie_keys, block_keys) -> np.ndarray:
    if scenario.aggregation is Aggregation.SUMMED or scenario.blocks == 1:
        total = block_scores[0].copy()
        for s in block_scores[1:]:
            total += s
        return winners(total, tie_keys)
    size = block_scores[0].shape[0]
    counts = np.zeros((size, scenario.n))
    for s, keys in zip(block_scores, block_keys):
        counts[np.arange(size), winners(s, keys)] += 1
    return winners(counts, tie_keys)


def _run_chunk(scenario: Scenario, profiles, seed: int, chunk: int, size: int) -> np.ndarray:
    k = scenario.cell_k
    t = scenario.score_fn.transform
    block_scores, block_keys = [], []
    for b, prof in enumerate(profiles):
        ncells = 4 if scenario.model.family is Family.POISSON_FIG2 else scenario.n
        rngs = [substream(seed, chunk, b, "outcomes", c) for c in range(ncells)]
        means = sample_cell_means(scenario.model, prof, k, size, rngs)
        block_scores.append(np.asarray(apply_transform(t, _agent_stat(scenario, means))).reshape(size, scenario.n))
        block_keys.append(substream(seed, chunk, b, "block_ties").random((size, scenario.n)))
    tie_keys = substream(seed, chunk, 0, "ties").random((size, scenario.n))
    return _aggregate(scenario, block_scores, tie_keys, block_keys)


def simulate_winners(scenario: Scenario, profiles=None, reps: int = 10_000, seed: int = 0, workers: int = 1,
                     chunk_size: int = CHUNK) -> np.ndarray:
    """Winner (0-based) of each of ``reps`` independent replications.

    Output is identical for any ``workers``: replications are cut into
    fixed chunks, each with its own substreams, and joined in chunk order.
    """
    if reps < 1:
        raise InvalidDimensions("reps must be >= 1")
    profiles = _profiles(scenario, profiles)
    sizes = [min(chunk_size, reps - c * chunk_size) for c in range(-(-reps // chunk_size))]

    def job(c):
        return _run_chunk(scenario, profiles, seed, c, sizes[c])

    if workers <= 1 or len(sizes) == 1:
        parts = [job(c) for c in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    return np.concatenate(parts).astype(np.int16)


@dataclass(frozen=True)
class MCEstimate:
    p_hat: np.ndarray
    se: np.ndarray
    counts: np.ndarray
    reps: int
    seed: int


def estimate_win_prob(scenario: Scenario, profiles=None, reps: int = 10_000, master_seed: int = 0,
                      workers: int = 1) -> MCEstimate:
    w = simulate_winners(scenario, profiles, reps, master_seed, workers)
    counts = np.bincount(w, minlength=scenario.n)
    p = counts / reps
    return MCEstimate(p, np.sqrt(p * (1 - p) / reps), counts, reps, master_seed)


def run_multiblock(scenario: Scenario, profiles: Sequence[ActionProfile], reps: int = 10_000,
                   master_seed: int = 0, workers: int = 1) -> MCEstimate:
    """Win frequencies when each block has its own action profile."""
    if len(profiles) != scenario.blocks:
        raise InvalidDimensions(f"expected {scenario.blocks} block profiles, got {len(profiles)}")
    return estimate_win_prob(scenario, list(profiles), reps, master_seed, workers)


@dataclass(frozen=True)
class GameResult:
    winner: int
    scores: np.ndarray
    outcomes_digest: str


def run_game_once(scenario: Scenario, profiles=None, rng=None) -> GameResult:
    """Play one experiment unit by unit: assign, observe, score, declare."""
    rng = np.random.default_rng(rng)
    profiles = _profiles(scenario, profiles)
    model, sf = scenario.model, scenario.score_fn
    if model.family is Family.POISSON_FIG2:
        assignment = sample_assignment(scenario.m, 2, 2, rng)
        outcomes = sample_outcomes(model, assignment, profiles[0], rng)
        cells = [[outcomes.agent_slice(i, g).mean() for g in range(2) for i in range(2)]]
    else:
        assignment = sample_assignment(scenario.m, scenario.n, scenario.blocks, rng)
        prof = profiles[0] if model.interference else profiles
        outcomes = sample_outcomes(model, assignment, prof, rng)
        cells = [
            [outcomes.agent_slice(i, b if scenario.blocks > 1 else None).mean() for i in range(scenario.n)]
            for b in range(scenario.blocks)
        ]
    block_scores = [
        np.atleast_2d(apply_transform(sf.transform, _agent_stat(scenario, np.array([c])))) for c in cells
    ]
    if scenario.aggregation is Aggregation.MAJORITY and scenario.blocks > 1:
        counts = np.zeros(scenario.n)
        for s in block_scores:
            counts[declare_winner(s[0], rng)] += 1
        final = counts
    else:
        final = np.sum([s[0] for s in block_scores], axis=0)
    digest = hashlib.sha256(np.ascontiguousarray(outcomes.y).tobytes()).hexdigest()[:16]
    return GameResult(declare_winner(final, rng), final, digest)


def _cell_count(spaces: Sequence[ActionSpace]) -> int:
    sizes = [len(s) for s in spaces]
    return sum(sizes[i] * int(np.prod([s for j, s in enumerate(sizes) if j != i])) for i in range(len(sizes)))


def mc_best_response(scenario: Scenario, reps_per_cell: int, master_seed: int = 0, max_cells: int = 5000,
                     workers: int = 1, design_id: str = "design") -> ICCertificate:
    """Monte Carlo best-response check of every agent at every opponent grid profile.

    All own-action cells of a row share random numbers, so deviation and
    natural action are compared on paired replications; a deviation is a
    violation when it beats the natural action by more than 3 paired SE.
    """
    if scenario.blocks != 1:
        raise InvalidDimensions("MC best-response search is per block; use a one-block scenario")
    spaces = scenario.spaces[0]
    cells = _cell_count(spaces)
    if cells > max_cells:
        raise BudgetExceeded(f"{cells} grid cells exceed the budget of {max_cells}")
    witnesses = []
    rows = 0
    for i, space in enumerate(spaces):
        nat = space.natural_index
        others = [range(len(s)) if j != i else [nat] for j, s in enumerate(spaces)]
        for idx in itertools.product(*others):
            rows += 1
            base = ActionProfile(tuple(spaces[j][t] for j, t in enumerate(idx)))
            wins = [
                simulate_winners(scenario, base.replace(i, a), reps_per_cell, master_seed, workers) == i
                for a in space
            ]
            p = np.array([w.mean() for w in wins])
            best, best_gain = None, 0.0
            for a_idx, w in enumerate(wins):
                if a_idx == nat:
                    continue
                diff = w.astype(float) - wins[nat].astype(float)
                se = diff.std() / np.sqrt(reps_per_cell)
                gain = p[a_idx] - p[nat]
                if gain > 3 * se and gain > best_gain:
                    best, best_gain = a_idx, gain
            if best is not None:
                witnesses.append(
                    Witness(i, base, space[best], space[nat], float(p[best]), float(p[nat]), None)
                )
    verdict = Verdict.NOT_IC if witnesses else Verdict.IC
    return ICCertificate(design_id, verdict, tuple(witnesses), Method.MONTE_CARLO,
                         tuple(len(s) for s in spaces), rows)


TABLE2_RATES = ((5.0, 10.0), (4.25, 9.95))
TABLE2_K = (5, 10, 25, 50, 100, 500, 1000)


@dataclass(frozen=True)
class Table2Row:
    k: int
    transform: str
    p_hat: float
    se: float


def run_table2_study(lams=TABLE2_RATES, k_list=TABLE2_K, transforms=(IDENTITY, SCALED_SQRT),
                     reps: int = 10_000, master_seed: int = 0, workers: int = 1) -> list[Table2Row]:
    """Agent 1's win frequency for two agents over two blocks with summed block scores.

    ``lams[i][b]`` is agent i's Poisson rate in block b.
    """
    lams = np.asarray(lams, dtype=float)
    n, blocks = lams.shape
    model = OutcomeModel(Family.POISSON)
    spaces = tuple(
        tuple(ActionSpace.of(Family.POISSON, [(lams[i, b],)]) for i in range(n)) for b in range(blocks)
    )
    rows = []
    for k in k_list:
        for t in transforms:
            sc = Scenario(model, ScoreFunction(Statistic.SAMPLE_MEAN, t), spaces, n * blocks * k, n, blocks)
            est = estimate_win_prob(sc, None, reps, master_seed, workers)
            rows.append(Table2Row(int(k), t.name, float(est.p_hat[0]), float(est.se[0])))
    return rows
