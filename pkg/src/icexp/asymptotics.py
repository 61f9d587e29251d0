"""Asymptotic win probabilities, delta-method covariances and IC certification."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import ndtr

from .errors import (
    AssumptionViolated,
    InvalidPair,
    InvalidParameter,
    InvalidVariance,
    NoClosedForm,
    NoIdentifyingStatistic,
    NotCertified,
    NotInvertible,
)
from .interference import build_algebra, statistic_covariance
from .outcome_models import ActionProfile, ActionSpace, Family, OutcomeModel
from .quadrature import cumulative_integral
from .scoring import (
    Design,
    ScoreFunction,
    Statistic,
    Transform,
    TransformKind,
    apply_transform,
    transform_derivative,
)

IC_MARGIN = 1e-9


class Verdict(str, Enum):
    IC = "IC"
    NOT_IC = "NotIC"


class Method(str, Enum):
    ANALYTIC = "analytic"
    MONTE_CARLO = "mc"


@dataclass(frozen=True)
class Witness:
    """A profitable deviation: agent plays ``deviation`` instead of ``natural``."""

    agent: int
    opponents: ActionProfile  # full profile with the agent's own slot at its natural action
    deviation: object
    natural: object
    p_deviation: float
    p_natural: float
    rival: int | None = None


@dataclass(frozen=True)
class ICCertificate:
    design_id: str
    verdict: Verdict
    witnesses: tuple[Witness, ...]
    method: Method
    grid_sizes: tuple[int, ...]
    cells_checked: int = 0

    @property
    def is_ic(self) -> bool:
        return self.verdict is Verdict.IC


def _chi(model: OutcomeModel, profile: ActionProfile) -> np.ndarray:
    return np.array([model.performance(a) for a in profile])


def identifying_covariance(model: OutcomeModel, profile: ActionProfile) -> np.ndarray:
    """Covariance Sigma(A) of the identifying statistic, per unit of the sqrt(k) scaling."""
    fam = model.family
    if fam is Family.POISSON_FIG1:
        raise NoIdentifyingStatistic(
            "the single-test-set interference design (Fig1) has no identifying statistic: outcomes depend "
            "on the actions only through lam1 + gamma*lamc2 and lam2 + gamma*lamc1, so lam_i + lamc_i "
            "cannot be recovered"
        )
    if fam is Family.POISSON_FIG2:
        return statistic_covariance(build_algebra(model.gamma), profile)
    return np.diag([model.unit_variance(a) for a in profile])


def delta_covariance(sigma, transform: Transform, chi) -> np.ndarray:
    """V_f = J Sigma J^T with J = diag(f'(chi_i))."""
    J = np.diag([transform_derivative(transform, c) for c in np.atleast_1d(chi)])
    return J @ np.asarray(sigma, dtype=float) @ J.T


def pairwise_variance(v, i: int, j: int) -> float:
    """Variance of the score difference of agents i and j."""
    if i == j:
        raise InvalidPair("pairwise variance needs two distinct agents")
    v = np.asarray(v, dtype=float)
    return float(v[i, i] + v[j, j] - v[i, j] - v[j, i])


def score_covariance(model: OutcomeModel, score_fn: ScoreFunction, profile: ActionProfile) -> np.ndarray:
    _check_identifying(model, score_fn)
    return delta_covariance(identifying_covariance(model, profile), score_fn.transform, _chi(model, profile))


def _check_identifying(model: OutcomeModel, score_fn: ScoreFunction) -> None:
    if model.family is Family.POISSON_FIG1:
        identifying_covariance(model, ActionProfile.of((1, 1), (1, 1)))
    if model.family is Family.POISSON_FIG2 and score_fn.statistic is not Statistic.INTERFERENCE_T:
        raise NoIdentifyingStatistic("on the Fig2 design only the statistic T = B C^-1 Y identifies performance")
    score_fn.check(model)


def _phi_ratio(diff: float, var: float) -> float:
    if var > 0:
        return diff / np.sqrt(var)
    return float(np.sign(diff)) * np.inf if diff != 0 else 0.0


def analytic_win_prob(model: OutcomeModel, score_fn: ScoreFunction, profile: ActionProfile, k: int) -> np.ndarray:
    """Closed-form two-agent win probabilities (P1, P2) for the cataloged designs."""
    if len(profile) != 2:
        raise NoClosedForm("closed forms are cataloged for two agents only")
    fam, kind = model.family, score_fn.transform.kind
    if score_fn.statistic is not Statistic.SAMPLE_MEAN:
        raise NoClosedForm(f"no closed form for statistic {score_fn.statistic.value}")
    a1, a2 = (model.validate(a).params for a in profile)
    rk = np.sqrt(k)
    if fam is Family.NORMAL_MEAN_VAR and kind is TransformKind.IDENTITY:
        z = rk * (a1[0] - a2[0]) / np.sqrt(a1[1] + a2[1])
    elif fam is Family.NORMAL_CURVED and kind is TransformKind.IDENTITY:
        z = rk * (a1[0] - a2[0]) / np.sqrt(a1[0] ** 4 + a2[0] ** 4)
    elif fam is Family.POISSON and kind is TransformKind.IDENTITY:
        z = rk * (a1[0] - a2[0]) / np.sqrt(a1[0] + a2[0])
    elif fam is Family.POISSON and kind is TransformKind.SCALED_SQRT:
        z = np.sqrt(2 * k) * (np.sqrt(a1[0]) - np.sqrt(a2[0]))
    elif fam is Family.POISSON_FIG1 and kind is TransformKind.IDENTITY:
        g = model.gamma
        (l1, c1), (l2, c2) = a1, a2
        z = rk * ((l1 - g * c1) - (l2 - g * c2)) / np.sqrt(l1 + g * c1 + l2 + g * c2)
    elif fam is Family.POISSON_FIG1 and kind is TransformKind.SCALED_SQRT:
        # var(2 sqrt(mean)) -> 1/k per agent, so the difference has variance 2/k
        (l1, c1), (l2, c2) = a1, a2
        g = model.gamma
        z = np.sqrt(2 * k) * (np.sqrt(l1 + g * c2) - np.sqrt(l2 + g * c1))
    else:
        raise NoClosedForm(f"no closed form cataloged for {fam.value} with {kind.value} scores")
    p1 = float(ndtr(z))
    return np.array([p1, 1.0 - p1])


def asymptotic_win_prob(model: OutcomeModel, score_fn: ScoreFunction, profile: ActionProfile, k: int) -> np.ndarray:
    """Two-agent win probabilities from the delta-method normal limit of f(T).

    ``k`` is units per agent (units per test set for the Fig2 design).
    """
    if len(profile) != 2:
        raise NoClosedForm("joint win probabilities for more than two agents need simulation")
    v = score_covariance(model, score_fn, profile)
    f = apply_transform(score_fn.transform, _chi(model, profile))
    z = np.sqrt(k) * _phi_ratio(f[0] - f[1], pairwise_variance(v, 0, 1))
    p1 = float(ndtr(z))
    return np.array([p1, 1.0 - p1])


def _opponent_profiles(spaces: Sequence[ActionSpace], i: int):
    others = [range(len(s)) if j != i else [s.natural_index] for j, s in enumerate(spaces)]
    for idx in itertools.product(*others):
        yield ActionProfile(tuple(spaces[j][t] for j, t in enumerate(idx)))


def _grid_search(spaces, evaluate, margin, design_id, method) -> ICCertificate:
    """Shared best-response loop.

    ``evaluate(i, profile)`` returns a list of (rival, objective, win_prob)
    for the profile in which agent i plays profile[i].
    """
    witnesses = []
    cells = 0
    for i, space in enumerate(spaces):
        nat = space.natural_index
        for base in _opponent_profiles(spaces, i):
            cells += 1
            per_action = [evaluate(i, base.replace(i, a)) for a in space]
            for r in range(len(per_action[0])):
                rival = per_action[0][r][0]
                obj = np.array([pa[r][1] for pa in per_action])
                best = int(np.argmax(obj))
                if obj[best] > obj[nat] + margin:
                    witnesses.append(
                        Witness(
                            agent=i,
                            opponents=base,
                            deviation=space[best],
                            natural=space[nat],
                            p_deviation=per_action[best][r][2],
                            p_natural=per_action[nat][r][2],
                            rival=rival,
                        )
                    )
    verdict = Verdict.NOT_IC if witnesses else Verdict.IC
    return ICCertificate(design_id, verdict, tuple(witnesses), method, tuple(len(s) for s in spaces), cells)


def check_ic_theorem1(
    model: OutcomeModel,
    score_fn: ScoreFunction,
    spaces: Sequence[ActionSpace],
    k: int,
    margin: float = IC_MARGIN,
    design_id: str = "design",
) -> ICCertificate:
    """Certify IC from the identifying statistic's normal limit.

    For each agent i, opponent grid profile and rival j the objective
    (f(chi_i) - f(chi_j)) / sqrt(v_ij) is maximised over i's grid; the
    asymptotic pairwise win probability is Phi(sqrt(k) * objective).
    """
    _check_identifying(model, score_fn)
    t = score_fn.transform

    def evaluate(i, profile):
        v = score_covariance(model, score_fn, profile)
        f = apply_transform(t, _chi(model, profile))
        out = []
        for j in range(len(profile)):
            if j == i:
                continue
            obj = _phi_ratio(f[i] - f[j], pairwise_variance(v, i, j))
            out.append((j, obj, float(ndtr(np.sqrt(k) * obj))))
        return out

    return _grid_search(spaces, evaluate, margin, design_id, Method.ANALYTIC)


def check_ic_analytic(
    model: OutcomeModel,
    score_fn: ScoreFunction,
    spaces: Sequence[ActionSpace],
    k: int,
    margin: float = IC_MARGIN,
    design_id: str = "design",
) -> ICCertificate:
    """Best-response search over the cataloged closed-form win probabilities.

    Works for designs without an identifying statistic (e.g. Fig1).
    """

    def evaluate(i, profile):
        p = analytic_win_prob(model, score_fn, profile, k)
        return [(1 - i, p[i], p[i])]

    if len(spaces) != 2:
        raise NoClosedForm("closed forms are cataloged for two agents only")
    return _grid_search(spaces, evaluate, margin, design_id, Method.ANALYTIC)


@dataclass(frozen=True)
class Theorem2Result:
    is_composed: bool
    variance_const: bool
    monotone: bool

    @property
    def conditions(self) -> tuple[bool, bool, bool]:
        return (self.is_composed, self.variance_const, self.monotone)

    @property
    def verdict(self) -> str:
        # the three conditions are sufficient, not necessary
        return "IC" if all(self.conditions) else "inconclusive"


def check_ic_theorem2(
    model: OutcomeModel,
    score_fn: ScoreFunction,
    spaces: Sequence[ActionSpace],
    k: int | None = None,
    var_tolerance: float = 1e-6,
) -> Theorem2Result:
    """Check the no-interference sufficient conditions: f(T), constant variance, monotone f."""
    if model.interference:
        raise AssumptionViolated(f"{model.family.value} violates the no-interference assumption")
    t = score_fn.transform
    is_composed = score_fn.statistic is Statistic.SAMPLE_MEAN
    variances = []
    monotone = True
    for space in spaces:
        chis = space.performances
        for a, c in zip(space, chis):
            variances.append(transform_derivative(t, c) ** 2 * model.unit_variance(a))
        fchi = apply_transform(t, chis)
        monotone &= int(np.argmax(fchi)) == space.natural_index
    variances = np.array(variances)
    if variances.min() <= 0:
        variance_const = bool(np.all(variances == variances[0]))
    else:
        variance_const = bool(variances.max() / variances.min() <= 1 + var_tolerance)
    return Theorem2Result(is_composed, variance_const, bool(monotone))


@dataclass(frozen=True, eq=False)
class StabilizedTransform:
    base: Transform
    z: np.ndarray
    sigma2_of_chi: np.ndarray
    nu_convex: bool
    inv_sqrt_convex: bool
    sigma2_convex: bool
    variance_monotone: bool
    quad_error: float
    lo: float
    hi: float

    @property
    def convexity_flags(self) -> dict[str, bool]:
        return {
            "nu_convex": self.nu_convex,
            "inv_sqrt_convex": self.inv_sqrt_convex,
            "sigma2_convex": self.sigma2_convex,
        }

    @property
    def more_powerful_guaranteed(self) -> bool:
        return self.variance_monotone and (self.nu_convex or (self.inv_sqrt_convex and self.sigma2_convex))


def variance_function(model: OutcomeModel) -> Callable[[float], float] | None:
    """z -> sigma^2(chi^{-1}(z)) for one-parameter families, else None."""
    if model.family is Family.POISSON:
        return lambda z: z
    if model.family is Family.NORMAL_CURVED:
        return lambda z: z**4
    return None


def _convex(values: np.ndarray, tol: float) -> bool:
    if len(values) < 3:
        return True
    return bool(np.all(values[:-2] - 2 * values[1:-1] + values[2:] >= -tol))


def build_stabilizer(
    chi,
    sigma2,
    lo: float | None = None,
    hi: float | None = None,
    quad_tol: float = 1e-10,
    n_knots: int = 201,
    convexity_tol: float = 1e-8,
) -> StabilizedTransform:
    """Tabulate nu(y) = integral from lo to y of dz / sqrt(sigma^2(chi^{-1}(z))).

    ``chi`` holds performances of the sampled actions in action order and
    must be strictly increasing.  ``sigma2`` is either a callable in z or
    the score variances at those actions (interpolated monotonically).
    The sampled performances become knots, each with two close neighbours so
    that derivatives of the table at those points are accurate.
    """
    chi = np.atleast_1d(np.asarray(chi, dtype=float))
    if len(chi) > 1 and np.any(np.diff(chi) <= 0):
        raise NotInvertible("performance must be strictly increasing over the sampled actions")
    lo = float(chi.min()) if lo is None else float(lo)
    hi = float(chi.max()) if hi is None else float(hi)
    if not hi > lo:
        raise NotInvertible("need a performance range with hi > lo")
    if callable(sigma2):
        s2 = np.vectorize(lambda z: float(sigma2(z)), otypes=[float])
        sampled = s2(chi)
    else:
        sampled = np.atleast_1d(np.asarray(sigma2, dtype=float))
        if sampled.shape != chi.shape:
            raise InvalidParameter("sigma2 samples must align with chi samples")
        if np.any(sampled <= 0):
            raise InvalidVariance("score variance must be positive")
        if len(chi) == 1:
            s2 = np.vectorize(lambda z: float(sampled[0]), otypes=[float])
        else:
            s2 = PchipInterpolator(chi, sampled, extrapolate=True)
    if np.any(sampled <= 0):
        raise InvalidVariance("score variance must be positive")

    uniform = np.linspace(lo, hi, n_knots)
    span = hi - lo
    delta = min(1e-6 * span, 0.25 * span / (n_knots - 1))
    extra = []
    for c in chi:
        if lo <= c <= hi:
            extra += [c - delta, c, c + delta]
    extra += [lo + delta, lo + 2 * delta, hi - delta, hi - 2 * delta]
    knots = np.unique(np.clip(np.concatenate([uniform, extra]), lo, hi))

    s2_knots = np.asarray(s2(knots), dtype=float)
    if np.any(s2_knots <= 0) or not np.all(np.isfinite(s2_knots)):
        raise InvalidVariance("sigma^2(chi^-1(z)) must be positive and finite on the range")

    integrand = lambda z: 1.0 / np.sqrt(float(s2(z)))
    nu, err = cumulative_integral(integrand, knots, quad_tol)
    base = Transform(TransformKind.TABULATED, knots, nu, "stabilizer")

    s2_u = np.asarray(s2(uniform), dtype=float)
    nu_u = np.interp(uniform, knots, nu)
    return StabilizedTransform(
        base=base,
        z=knots,
        sigma2_of_chi=s2_knots,
        nu_convex=_convex(nu_u, convexity_tol),
        inv_sqrt_convex=_convex(1.0 / np.sqrt(s2_u), convexity_tol),
        sigma2_convex=_convex(s2_u, convexity_tol),
        variance_monotone=bool(np.all(np.diff(sampled) >= 0)),
        quad_error=err,
        lo=lo,
        hi=hi,
    )


@dataclass(frozen=True)
class PowerComparison:
    tau: int
    p_tau_D: float
    p_tau_Dprime: float
    more_powerful: bool
    method: Method
    se: float | None = None


def power_compare(
    designs: tuple[Design, Design],
    model: OutcomeModel,
    natural: ActionProfile,
    k: int,
    certificates: Sequence[ICCertificate],
    method: Method | str = Method.ANALYTIC,
    reps: int = 100_000,
    seed: int = 0,
    workers: int = 1,
) -> PowerComparison:
    """Win probability of the best agent at the natural profile under D and D'."""
    method = Method(method)
    certified = {c.design_id for c in certificates if c.is_ic}
    for d in designs:
        if d.design_id not in certified:
            raise NotCertified(f"design {d.design_id!r} has no IC certificate")
    chi = _chi(model, natural)
    tau = int(np.argmax(chi))
    if method is Method.ANALYTIC:
        ps = []
        for d in designs:
            try:
                p = analytic_win_prob(model, d.score_fn, natural, k)
            except NoClosedForm:
                p = asymptotic_win_prob(model, d.score_fn, natural, k)
            ps.append(float(p[tau]))
        return PowerComparison(tau, ps[0], ps[1], ps[1] >= ps[0], method)

    from .simulator import Scenario, simulate_winners

    wins = []
    for d in designs:
        sc = Scenario.single(model, d.score_fn, natural, k)
        wins.append(simulate_winners(sc, [natural], reps, seed, workers) == tau)
    p0, p1 = (float(w.mean()) for w in wins)
    se = float(np.std(wins[1].astype(float) - wins[0].astype(float)) / np.sqrt(reps))
    return PowerComparison(tau, p0, p1, p1 >= p0 - 3 * se, method, se)

