"""Score functions: identifying statistic, transform, and the winner rule."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import InvalidDimensions, InvalidParameter, MissingParameter, SingularTransform
from .outcome_models import Family, ObservedOutcomes, OutcomeModel


class TransformKind(str, Enum):
    IDENTITY = "identity"
    RECIPROCAL = "reciprocal"
    NEG_RECIPROCAL = "neg_reciprocal"
    SCALED_SQRT = "scaled_sqrt"
    TABULATED = "tabulated"


@dataclass(frozen=True, eq=False)
class Transform:
    """Elementwise score transform f.

    Tabulated transforms interpolate linearly between knots ``(x, nu)`` and
    are clamped outside the knot range.
    """

    kind: TransformKind
    x: np.ndarray | None = None
    nu: np.ndarray | None = None
    source: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", TransformKind(self.kind))
        if self.kind is TransformKind.TABULATED:
            if self.x is None or self.nu is None:
                raise InvalidParameter("tabulated transform needs knots")
            x = np.asarray(self.x, dtype=float)
            nu = np.asarray(self.nu, dtype=float)
            if x.ndim != 1 or x.shape != nu.shape or len(x) < 2:
                raise InvalidParameter("tabulated knots must be two equal-length vectors (>= 2 knots)")
            if np.any(np.diff(x) <= 0):
                raise InvalidParameter("tabulated knots must be strictly increasing in x")
            if np.any(np.diff(nu) < 0):
                raise InvalidParameter("tabulated values must be nondecreasing")
            object.__setattr__(self, "x", x)
            object.__setattr__(self, "nu", nu)

    @property
    def name(self) -> str:
        if self.kind is TransformKind.TABULATED:
            return f"tabulated:{self.source}" if self.source else "tabulated"
        return self.kind.value

    def __eq__(self, other):
        if not isinstance(other, Transform) or other.kind is not self.kind:
            return False
        if self.kind is not TransformKind.TABULATED:
            return True
        return np.array_equal(self.x, other.x) and np.array_equal(self.nu, other.nu)

    __hash__ = None

    def __call__(self, x):
        return apply_transform(self, x)

    def shifted(self, c: float) -> "Transform":
        """Same tabulated transform plus a constant (argmax-invariant)."""
        if self.kind is not TransformKind.TABULATED:
            raise InvalidParameter("only tabulated transforms can be shifted")
        return Transform(self.kind, self.x, self.nu + c, self.source)

    @classmethod
    def parse(cls, spec: str, base_dir: str | Path | None = None) -> "Transform":
        """Build a transform from its config name, e.g. ``"scaled_sqrt"`` or ``"tabulated:nu.txt"``."""
        spec = spec.strip()
        if spec.startswith("tabulated:"):
            ref = spec.split(":", 1)[1]
            path = Path(ref)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            return load_tabulated(path, source=ref)
        try:
            kind = TransformKind(spec)
        except ValueError:
            raise InvalidParameter(f"unknown transform {spec!r}") from None
        if kind is TransformKind.TABULATED:
            raise InvalidParameter("tabulated transforms are written 'tabulated:<path>'")
        return cls(kind)


IDENTITY = Transform(TransformKind.IDENTITY)
RECIPROCAL = Transform(TransformKind.RECIPROCAL)
NEG_RECIPROCAL = Transform(TransformKind.NEG_RECIPROCAL)
SCALED_SQRT = Transform(TransformKind.SCALED_SQRT)


def load_tabulated(path, source: str | None = None) -> Transform:
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 2:
        raise InvalidParameter(f"{path}: expected two numeric columns (x, nu)")
    return Transform(TransformKind.TABULATED, data[:, 0], data[:, 1], source or str(path))


def save_tabulated(t: Transform, path) -> None:
    np.savetxt(path, np.column_stack([t.x, t.nu]), fmt="%.17g", header="x nu")


def apply_transform(t: Transform, x):
    """f(x), with -inf for points outside the transform's domain."""
    arr = np.asarray(x, dtype=float)
    kind = t.kind
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind is TransformKind.IDENTITY:
            out = arr.copy()
        elif kind is TransformKind.RECIPROCAL:
            out = np.where(arr == 0, -np.inf, 1.0 / arr)
        elif kind is TransformKind.NEG_RECIPROCAL:
            out = np.where(arr == 0, -np.inf, -1.0 / arr)
        elif kind is TransformKind.SCALED_SQRT:
            out = np.where(arr < 0, -np.inf, 2.0 * np.sqrt(np.abs(arr)))
        else:
            out = np.interp(arr, t.x, t.nu)
    return float(out) if out.ndim == 0 else out


def transform_derivative(t: Transform, x: float) -> float:
    """f'(x).  Tabulated transforms use a second-order three-point rule at knots."""
    x = float(x)
    kind = t.kind
    if kind is TransformKind.IDENTITY:
        return 1.0
    if kind in (TransformKind.RECIPROCAL, TransformKind.NEG_RECIPROCAL):
        if x == 0:
            raise SingularTransform("reciprocal transform has no derivative at 0")
        return (-1.0 if kind is TransformKind.RECIPROCAL else 1.0) / (x * x)
    if kind is TransformKind.SCALED_SQRT:
        if x <= 0:
            raise SingularTransform(f"2*sqrt(x) has no finite derivative at x={x}")
        return 1.0 / np.sqrt(x)
    xs, nu = t.x, t.nu
    if x < xs[0] or x > xs[-1]:
        raise SingularTransform(f"x={x} outside tabulated range [{xs[0]}, {xs[-1]}]")
    j = int(np.searchsorted(xs, x))
    if j < len(xs) and xs[j] == x:
        if j == 0 or j == len(xs) - 1:
            return _one_sided(xs, nu, j)
        hm, hp = xs[j] - xs[j - 1], xs[j + 1] - xs[j]
        return (hm * hm * nu[j + 1] - hp * hp * nu[j - 1] + (hp * hp - hm * hm) * nu[j]) / (
            hm * hp * (hm + hp)
        )
    return (nu[j] - nu[j - 1]) / (xs[j] - xs[j - 1])


def _one_sided(xs, nu, j):
    if len(xs) < 3:
        return (nu[1] - nu[0]) / (xs[1] - xs[0])
    if j == 0:
        x0, x1, x2 = xs[:3]
        f0, f1, f2 = nu[:3]
        sign = 1.0
    else:
        x0, x1, x2 = xs[-1], xs[-2], xs[-3]
        f0, f1, f2 = nu[-1], nu[-2], nu[-3]
        sign = -1.0
    h1, h2 = abs(x1 - x0), abs(x2 - x1)
    d = (-(2 * h1 + h2) / (h1 * (h1 + h2)) * f0 + (h1 + h2) / (h1 * h2) * f1 - h1 / (h2 * (h1 + h2)) * f2)
    return sign * d


class Statistic(str, Enum):
    SAMPLE_MEAN = "sample_mean"
    INTERFERENCE_T = "interference_t"


@dataclass(frozen=True)
class ScoreFunction:
    statistic: Statistic
    transform: Transform

    def __post_init__(self):
        object.__setattr__(self, "statistic", Statistic(self.statistic))

    @classmethod
    def sample_mean(cls, transform: Transform = IDENTITY) -> "ScoreFunction":
        return cls(Statistic.SAMPLE_MEAN, transform)

    def check(self, model: OutcomeModel) -> None:
        if self.statistic is Statistic.INTERFERENCE_T and model.family is not Family.POISSON_FIG2:
            raise InvalidParameter("the interference statistic T needs the Fig2 design")


@dataclass(frozen=True)
class Design:
    """A named design: complete randomization plus a score function and argmax winner."""

    design_id: str
    score_fn: ScoreFunction


def statistic_from_cell_means(score_fn: ScoreFunction, means: np.ndarray, gamma: float | None = None) -> np.ndarray:
    """Statistic T from cell means; rows are replications.

    For SAMPLE_MEAN the cells are the agents.  On Fig2 data (4 cells ordered
    G11, G12, G21, G22) SAMPLE_MEAN pools each agent's two test sets.
    """
    means = np.asarray(means, dtype=float)
    if score_fn.statistic is Statistic.INTERFERENCE_T:
        if gamma is None:
            raise MissingParameter("the interference statistic needs gamma")
        from .interference import build_algebra, compute_T

        return compute_T(build_algebra(gamma), means)
    return means


def compute_statistic(score_fn: ScoreFunction, outcomes: ObservedOutcomes, gamma: float | None = None) -> np.ndarray:
    a = outcomes.assignment
    if score_fn.statistic is Statistic.INTERFERENCE_T:
        if gamma is None:
            raise MissingParameter("the interference statistic needs gamma")
        if a.n != 2 or a.blocks != 2:
            raise InvalidDimensions("the interference statistic needs 2 agents and 2 unit groups")
        cells = [outcomes.agent_slice(i, g) for g in range(2) for i in range(2)]
    else:
        cells = [outcomes.agent_slice(i) for i in range(a.n)]
    if any(len(c) == 0 for c in cells):
        raise InvalidDimensions("empty test set")
    return statistic_from_cell_means(score_fn, np.array([c.mean() for c in cells]), gamma)


def score(score_fn: ScoreFunction, statistic):
    return apply_transform(score_fn.transform, statistic)


def declare_winner(scores, rng=None) -> int:
    """Index (0-based) of the highest score; ties broken uniformly at random."""
    rng = np.random.default_rng(rng)
    s = np.asarray(scores, dtype=float)
    return int(winners(s[None, :], rng.random((1, len(s))))[0])


def winners(scores: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Vectorised winner rule over rows.

    ``keys`` are uniforms of the same shape; among tied maxima the agent with
    the largest key wins, which is a uniform choice.  Keys are consumed
    whether or not ties occur so the stream position never depends on data.
    """
    top = scores.max(axis=1, keepdims=True)
    k = np.where(scores == top, keys, -1.0)
    return k.argmax(axis=1)
