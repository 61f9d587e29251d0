import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icexp.asymptotics import (
    Method,
    Verdict,
    analytic_win_prob,
    asymptotic_win_prob,
    build_stabilizer,
    check_ic_analytic,
    check_ic_theorem1,
    check_ic_theorem2,
    delta_covariance,
    identifying_covariance,
    pairwise_variance,
    power_compare,
    variance_function,
)
from icexp.errors import (
    AssumptionViolated,
    InvalidPair,
    InvalidVariance,
    NoClosedForm,
    NoIdentifyingStatistic,
    NotCertified,
    NotInvertible,
)
from icexp.outcome_models import Action, ActionProfile, ActionSpace, Family, OutcomeModel
from icexp.quadrature import adaptive_simpson, cumulative_integral
from icexp.scoring import (
    IDENTITY,
    NEG_RECIPROCAL,
    RECIPROCAL,
    SCALED_SQRT,
    Design,
    ScoreFunction,
    Statistic,
    Transform,
    TransformKind,
    transform_derivative,
)


def phi(x):
    return float(mpmath.ncdf(x))


NMV = OutcomeModel(Family.NORMAL_MEAN_VAR)
CURVED = OutcomeModel(Family.NORMAL_CURVED)
POIS = OutcomeModel(Family.POISSON)
MEAN = ScoreFunction.sample_mean()


# ---- closed forms -------------------------------------------------------


def test_example_2a_values_at_k1():
    p_nat = analytic_win_prob(NMV, MEAN, ActionProfile.of((2, 20), (9, 1)), 1)
    p_dev = analytic_win_prob(NMV, MEAN, ActionProfile.of((1.5, 100), (9, 1)), 1)
    assert p_nat[0] == pytest.approx(phi(-7 / mpmath.sqrt(21)), abs=1e-12)
    assert p_nat[0] == pytest.approx(0.0634, abs=1e-4)
    assert p_dev[0] == pytest.approx(0.2277, abs=1e-4)
    assert p_nat.sum() == 1.0


def test_poisson_closed_forms():
    p = analytic_win_prob(POIS, MEAN, ActionProfile.of((5,), (4,)), 50)
    assert p[0] == pytest.approx(phi(mpmath.sqrt(50) / 3), abs=1e-12)
    assert p[0] == pytest.approx(0.9908, abs=1e-4)
    q = analytic_win_prob(POIS, ScoreFunction.sample_mean(SCALED_SQRT), ActionProfile.of((5,), (4,)), 50)
    assert q[0] == pytest.approx(phi(mpmath.sqrt(100) * (mpmath.sqrt(5) - 2)), abs=1e-12)


def test_fig1_closed_forms():
    m = OutcomeModel(Family.POISSON_FIG1, 0.5)
    prof = ActionProfile.of((3, 1), (3, 3))
    p = analytic_win_prob(m, MEAN, prof, 10)[0]
    want = phi(mpmath.sqrt(10) * ((3 - 0.5) - (3 - 1.5)) / mpmath.sqrt(3 + 0.5 + 3 + 1.5))
    assert p == pytest.approx(want, abs=1e-12)
    q = analytic_win_prob(m, ScoreFunction.sample_mean(SCALED_SQRT), prof, 10)[0]
    assert q == pytest.approx(phi(mpmath.sqrt(20) * (mpmath.sqrt(4.5) - mpmath.sqrt(3.5))), abs=1e-12)


def test_no_closed_form():
    with pytest.raises(NoClosedForm):
        analytic_win_prob(POIS, ScoreFunction.sample_mean(RECIPROCAL), ActionProfile.of((5,), (4,)), 5)
    with pytest.raises(NoClosedForm):
        analytic_win_prob(POIS, MEAN, ActionProfile.of((5,), (4,), (3,)), 5)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.2, 20), st.floats(0.2, 20), st.integers(1, 500))
def test_delta_method_reproduces_closed_forms(l1, l2, k):
    prof = ActionProfile.of((l1,), (l2,))
    for sf in (MEAN, ScoreFunction.sample_mean(SCALED_SQRT)):
        np.testing.assert_allclose(asymptotic_win_prob(POIS, sf, prof, k), analytic_win_prob(POIS, sf, prof, k),
                                   atol=1e-12)


# ---- covariance helpers -------------------------------------------------


def test_covariances():
    prof = ActionProfile.of((2, 20), (9, 1))
    S = identifying_covariance(NMV, prof)
    np.testing.assert_array_equal(S, np.diag([20.0, 1.0]))
    V = delta_covariance(np.diag([4.0, 9.0]), SCALED_SQRT, [4.0, 9.0])
    np.testing.assert_allclose(V, np.eye(2))
    assert pairwise_variance(np.array([[2.0, 0.5], [0.5, 3.0]]), 0, 1) == 4.0
    with pytest.raises(InvalidPair):
        pairwise_variance(np.eye(2), 1, 1)
    with pytest.raises(NoIdentifyingStatistic):
        identifying_covariance(OutcomeModel(Family.POISSON_FIG1, 0.2), ActionProfile.of((1, 1), (1, 1)))


# ---- Theorem 1 search ---------------------------------------------------


def _spaces(family, *grids):
    return tuple(ActionSpace.of(family, g) for g in grids)


def test_theorem1_ex2a_not_ic():
    cert = check_ic_theorem1(NMV, MEAN, _spaces(Family.NORMAL_MEAN_VAR, [(1.5, 100), (2, 20)], [(9, 1)]), k=1)
    assert cert.verdict is Verdict.NOT_IC and cert.method is Method.ANALYTIC
    (w,) = cert.witnesses
    assert w.agent == 0 and w.deviation == Action((1.5, 100)) and w.natural == Action((2, 20))
    assert w.p_deviation == pytest.approx(0.2277, abs=1e-4)


def test_theorem1_singleton_grids_ic():
    cert = check_ic_theorem1(POIS, MEAN, _spaces(Family.POISSON, [(5,)], [(4,)], [(3,)]), 10)
    assert cert.is_ic and cert.witnesses == ()


def test_theorem1_ex2d():
    spaces = _spaces(Family.NORMAL_CURVED, [(1,), (2,), (3,)], [(1,), (2,), (3,)])
    assert not check_ic_theorem1(CURVED, MEAN, spaces, 10).is_ic
    assert check_ic_theorem1(CURVED, ScoreFunction.sample_mean(NEG_RECIPROCAL), spaces, 10).is_ic


def test_theorem1_shift_invariance():
    """Adding a constant to a tabulated transform never changes the verdict."""
    x = np.linspace(0.5, 10, 60)
    base = Transform(TransformKind.TABULATED, x, np.log(x))
    spaces = _spaces(Family.POISSON, [(1,), (2,), (5,)], [(1.5,), (4,)])
    a = check_ic_theorem1(POIS, ScoreFunction.sample_mean(base), spaces, 20)
    b = check_ic_theorem1(POIS, ScoreFunction.sample_mean(base.shifted(1e3)), spaces, 20)
    assert a.verdict == b.verdict and len(a.witnesses) == len(b.witnesses)


def test_three_agents():
    spaces = _spaces(Family.POISSON, [(3,), (5,)], [(4,), (4.5,)], [(2,), (6,)])
    cert = check_ic_theorem1(POIS, MEAN, spaces, 20)
    assert cert.is_ic and cert.cells_checked == 12  # 2*2 opponent profiles per agent


def test_analytic_search_fig1():
    m = OutcomeModel(Family.POISSON_FIG1, 0.5)
    spaces = _spaces(Family.POISSON_FIG1, [(3, 3), (3, 1)], [(3, 3)])
    with pytest.raises(NoIdentifyingStatistic):
        check_ic_theorem1(m, MEAN, spaces, 10)
    cert = check_ic_analytic(m, MEAN, spaces, 10)
    assert not cert.is_ic and cert.witnesses[0].deviation == Action((3, 1))


def test_fig2_requires_T():
    m = OutcomeModel(Family.POISSON_FIG2, 0.5)
    spaces = _spaces(Family.POISSON_FIG2, [(3, 1)], [(4, 2)])
    with pytest.raises(NoIdentifyingStatistic):
        check_ic_theorem1(m, MEAN, spaces, 10)
    assert check_ic_theorem1(m, ScoreFunction(Statistic.INTERFERENCE_T, IDENTITY), spaces, 10).is_ic


# ---- Theorem 2 ----------------------------------------------------------


def test_theorem2_conditions():
    spaces = _spaces(Family.NORMAL_CURVED, [(1,), (2,), (3,)], [(1,), (2,)])
    r = check_ic_theorem2(CURVED, ScoreFunction.sample_mean(NEG_RECIPROCAL), spaces, 10)
    assert r.conditions == (True, True, True) and r.verdict == "IC"
    r = check_ic_theorem2(CURVED, MEAN, spaces, 10)
    assert r.conditions == (True, False, True) and r.verdict == "inconclusive"
    # 1/x is variance-stabilizing but reverses the order of performances
    r = check_ic_theorem2(CURVED, ScoreFunction.sample_mean(RECIPROCAL), spaces, 10)
    assert r.conditions == (True, True, False)
    with pytest.raises(AssumptionViolated):
        check_ic_theorem2(OutcomeModel(Family.POISSON_FIG2, 0.5), MEAN,
                          _spaces(Family.POISSON_FIG2, [(1, 1)], [(1, 1)]), 10)


def test_theorem2_sqrt_poisson():
    spaces = _spaces(Family.POISSON, [(1,), (4,), (9,)], [(2,)])
    r = check_ic_theorem2(POIS, ScoreFunction.sample_mean(SCALED_SQRT), spaces, 10)
    assert r.verdict == "IC"


# ---- quadrature and stabilizer --------------------------------------------


def test_adaptive_simpson():
    v, err = adaptive_simpson(np.cos, 0, np.pi / 2, 1e-12)
    assert v == pytest.approx(1.0, abs=1e-11) and err < 1e-10
    v, _ = adaptive_simpson(lambda z: 1 / np.sqrt(z), 1e-8, 1, 1e-10)
    assert v == pytest.approx(2 - 2e-4, abs=1e-8)
    assert adaptive_simpson(np.exp, 1, 1) == (0.0, 0.0)
    knots = np.linspace(0, 1, 11)
    out, _ = cumulative_integral(lambda z: 3 * z * z, knots)
    np.testing.assert_allclose(out, knots**3, atol=1e-13)


@pytest.mark.parametrize(
    "family, lo, hi, F",
    [
        (Family.POISSON, 1.0, 10.0, lambda y: 2 * np.sqrt(y)),
        (Family.NORMAL_CURVED, 1.0, 3.0, lambda y: -1 / y),
    ],
)
def test_stabilizer_matches_antiderivative(family, lo, hi, F):
    grid = np.linspace(lo, hi, 7)
    s2 = variance_function(OutcomeModel(family))
    st_ = build_stabilizer(grid, s2, lo, hi, quad_tol=1e-10)
    np.testing.assert_allclose(st_.base.nu, F(st_.z) - F(lo), atol=1e-6)
    assert st_.base.nu[0] == 0.0
    for c in grid:
        assert transform_derivative(st_.base, c) == pytest.approx(1 / np.sqrt(s2(c)), rel=1e-6)
    assert st_.inv_sqrt_convex and st_.sigma2_convex and st_.more_powerful_guaranteed


def test_stabilizer_constant_variance_is_linear():
    st_ = build_stabilizer([1.0, 2.0, 3.0], np.array([4.0, 4.0, 4.0]))
    np.testing.assert_allclose(st_.base.nu, (st_.z - 1) / 2, atol=1e-12)
    assert st_.nu_convex


def test_stabilizer_sampled_variance():
    chi = np.linspace(1, 5, 9)
    st_ = build_stabilizer(chi, chi)  # sigma^2 = chi sampled, PCHIP in between
    np.testing.assert_allclose(np.interp(chi, st_.z, st_.base.nu), 2 * np.sqrt(chi) - 2, atol=2e-3)


def test_stabilizer_errors():
    with pytest.raises(NotInvertible):
        build_stabilizer([1.0, 1.0, 2.0], lambda z: z)
    with pytest.raises(NotInvertible):
        build_stabilizer([2.0, 1.0], lambda z: z)
    with pytest.raises(InvalidVariance):
        build_stabilizer([1.0, 2.0], np.array([1.0, 0.0]))
    with pytest.raises(InvalidVariance):
        build_stabilizer([1.0, 2.0], lambda z: z - 1.5)


# ---- power ----------------------------------------------------------------


def test_power_compare_requires_certificates():
    spaces = _spaces(Family.POISSON, [(5,)], [(4,)])
    d = (Design("D", MEAN), Design("D'", ScoreFunction.sample_mean(SCALED_SQRT)))
    prof = ActionProfile.of((5,), (4,))
    certs = [check_ic_theorem1(POIS, x.score_fn, spaces, 10, design_id=x.design_id) for x in d]
    res = power_compare(d, POIS, prof, 10, certs)
    assert res.tau == 0 and res.more_powerful and res.p_tau_Dprime > res.p_tau_D
    with pytest.raises(NotCertified):
        power_compare(d, POIS, prof, 10, certs[:1])


def test_power_compare_mc_single_block_equal():
    """With one block an order-preserving transform leaves every winner unchanged."""
    spaces = _spaces(Family.POISSON, [(5,)], [(4,)])
    d = (Design("D", MEAN), Design("D'", ScoreFunction.sample_mean(SCALED_SQRT)))
    certs = [check_ic_theorem1(POIS, x.score_fn, spaces, 10, design_id=x.design_id) for x in d]
    res = power_compare(d, POIS, ActionProfile.of((5,), (4,)), 10, certs, Method.MONTE_CARLO, reps=20_000, seed=1)
    assert res.p_tau_D == res.p_tau_Dprime and res.se == 0.0
