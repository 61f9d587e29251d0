"""Reproduction targets: computed values side by side with the published ones."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from .asymptotics import analytic_win_prob, check_ic_theorem1, check_ic_theorem2
from .interference import (
    build_algebra,
    compute_T,
    pairwise_variance_closed_form,
    pairwise_variance_exact,
    statistic_covariance,
)
from .outcome_models import ActionProfile, ActionSpace, Family, OutcomeModel, sample_cell_means
from .scoring import IDENTITY, NEG_RECIPROCAL, ScoreFunction, Statistic
from .simulator import TABLE2_K, Scenario, mc_best_response, run_table2_study

TABLE2_PUBLISHED = {
    "identity": (0.62, 0.67, 0.77, 0.85, 0.93, 1.00, 1.00),
    "scaled_sqrt": (0.65, 0.72, 0.82, 0.91, 0.97, 1.00, 1.00),
}


@dataclass(frozen=True)
class Check:
    """One compared quantity; ``passed`` is None for informational rows."""

    name: str
    computed: object
    published: object
    tolerance: object
    passed: bool | None

    @property
    def delta(self):
        try:
            return abs(float(self.computed) - float(self.published))
        except (TypeError, ValueError):
            return None


def table2(reps: int = 10_000, seed: int = 2015, workers: int = 1, tol: float = 0.02) -> list[Check]:
    rows = run_table2_study(reps=reps, master_seed=seed, workers=workers)
    out = []
    for r in rows:
        pub = TABLE2_PUBLISHED[r.transform][TABLE2_K.index(r.k)]
        got = round(r.p_hat, 2)  # the published table has two decimals
        out.append(Check(f"k={r.k} {r.transform}", got, pub, tol, abs(got - pub) <= tol + 1e-12))
    return out


EX2A_SPACES = (
    ActionSpace.of(Family.NORMAL_MEAN_VAR, [(1.5, 100), (2, 20)]),
    ActionSpace.of(Family.NORMAL_MEAN_VAR, [(9, 1)]),
)


def example2a(reps: int = 200_000, seed: int = 2015, workers: int = 1) -> list[Check]:
    model = OutcomeModel(Family.NORMAL_MEAN_VAR)
    sf = ScoreFunction(Statistic.SAMPLE_MEAN, IDENTITY)
    cert = check_ic_theorem1(model, sf, EX2A_SPACES, k=1)
    nat = ActionProfile.of((2, 20), (9, 1))
    dev = ActionProfile.of((1.5, 100), (9, 1))
    p_nat = analytic_win_prob(model, sf, nat, 1)[0]
    p_dev = analytic_win_prob(model, sf, dev, 1)[0]
    sc = Scenario(model, sf, [EX2A_SPACES], m=2, n=2)
    mc = mc_best_response(sc, reps, seed, workers=workers, design_id="ex2a")
    return [
        Check("verdict (asymptotic)", cert.verdict.value, "NotIC", "exact", cert.verdict.value == "NotIC"),
        Check("verdict (Monte Carlo, k=1)", mc.verdict.value, "NotIC", "3 paired SE", mc.verdict.value == "NotIC"),
        Check("deviation beats natural (k=1)", bool(p_dev > p_nat), True, "exact", bool(p_dev > p_nat)),
        # the printed magnitudes match no integer k; shown for reference only
        Check("P1 natural (2,20), k=1", round(float(p_nat), 4), 0.12, "n/a", None),
        Check("P1 deviation (1.5,100), k=1", round(float(p_dev), 4), 0.364, "n/a", None),
    ]


EX2D_SPACES = (
    ActionSpace.of(Family.NORMAL_CURVED, [(1,), (2,), (3,)]),
    ActionSpace.of(Family.NORMAL_CURVED, [(1,), (2,), (3,)]),
)


def example2d(k: int = 10) -> list[Check]:
    model = OutcomeModel(Family.NORMAL_CURVED)
    ident = ScoreFunction(Statistic.SAMPLE_MEAN, IDENTITY)
    negrec = ScoreFunction(Statistic.SAMPLE_MEAN, NEG_RECIPROCAL)
    before = check_ic_theorem1(model, ident, EX2D_SPACES, k)
    after = check_ic_theorem1(model, negrec, EX2D_SPACES, k)
    t2 = check_ic_theorem2(model, negrec, EX2D_SPACES, k)
    return [
        Check("sample-mean score verdict", before.verdict.value, "NotIC", "exact", before.verdict.value == "NotIC"),
        Check("-1/mean score verdict", after.verdict.value, "IC", "exact", after.verdict.value == "IC"),
        Check("sufficient conditions hold", str(t2.conditions), "(True, True, True)", "exact", all(t2.conditions)),
    ]


def power_violations(k: int, n: int = 20, lo: float = 0.1, hi: float = 20.0) -> tuple[int, int]:
    """Count grid pairs l1 > l2 where the square-root score is not strictly more powerful.

    Phi(a) > Phi(b) is tested as log(1 - Phi(a)) < log(1 - Phi(b)); the
    upper tails stay representable where both Phi values round to 1.0.
    """
    lam = np.linspace(lo, hi, n)
    l1, l2 = np.meshgrid(lam, lam, indexing="ij")
    mask = l1 > l2
    z_sqrt = np.sqrt(2 * k) * (np.sqrt(l1) - np.sqrt(l2))
    z_mean = np.sqrt(k) * (l1 - l2) / np.sqrt(l1 + l2)
    better = log_ndtr(-z_sqrt) < log_ndtr(-z_mean)
    return int((mask & ~better).sum()), int(mask.sum())


def example3b() -> list[Check]:
    out = []
    for k in (10, 100):
        bad, total = power_violations(k)
        out.append(Check(f"violations on 20x20 grid, k={k} ({total} pairs)", bad, 0, "exact", bad == 0))
    return out


def example3g(draws: int = 100, seed: int = 2015, reps: int = 10_000, k: int = 50) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst_printed = worst_exact = 0.0
    for _ in range(draws):
        g = rng.uniform(0, 0.95)
        rates = rng.uniform(0.1, 10, size=4)
        prof = ActionProfile.of(tuple(rates[:2]), tuple(rates[2:]))
        alg = build_algebra(g)
        dense = statistic_covariance(alg, prof)
        v = dense[0, 0] + dense[1, 1] - 2 * dense[0, 1]
        worst_printed = max(worst_printed, abs(pairwise_variance_closed_form(alg, prof) - v) / v)
        worst_exact = max(worst_exact, abs(pairwise_variance_exact(alg, prof) - v) / v)

    model = OutcomeModel(Family.POISSON_FIG2, 0.5)
    prof = ActionProfile.of((3, 1), (4, 2))
    means = sample_cell_means(model, prof, k, reps, rng)
    T = compute_T(build_algebra(0.5), means)
    chi = np.array([4.0, 6.0])
    z = np.abs(T.mean(axis=0) - chi) / (T.std(axis=0, ddof=1) / np.sqrt(reps))
    spaces = (
        ActionSpace.of(Family.POISSON_FIG2, [(3, 1), (2, 1), (1, 3)]),
        ActionSpace.of(Family.POISSON_FIG2, [(4, 2), (2, 2)]),
    )
    cert = check_ic_theorem1(model, ScoreFunction(Statistic.INTERFERENCE_T, IDENTITY), spaces, k)
    return [
        Check("printed closed form vs dense v (max rel err)", float(f"{worst_printed:.3g}"), 0.0, 1e-10,
              bool(worst_printed <= 1e-10)),
        Check("corrected closed form vs dense v (max rel err)", float(f"{worst_exact:.3g}"), 0.0, 1e-10,
              bool(worst_exact <= 1e-10)),
        Check("E[T] - B a within 3 SE (max |z|)", round(float(z.max()), 3), 0.0, 3.0, bool(z.max() <= 3)),
        Check("T-score verdict", cert.verdict.value, "IC", "exact", cert.verdict.value == "IC"),
    ]


TARGETS = {
    "table2": table2,
    "example2a": example2a,
    "example2d": example2d,
    "example3b": example3b,
    "example3g": example3g,
}
