import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icexp.errors import InvalidParameter, SingularC
from icexp.interference import (
    B,
    build_algebra,
    compute_T,
    pairwise_variance_closed_form,
    pairwise_variance_exact,
    printed_covariance,
    profile_vector,
    rate_mixing_matrix,
    statistic_covariance,
)
from icexp.outcome_models import ActionProfile, Family, OutcomeModel, cell_rates

rates = st.floats(0.1, 10)


def test_build_algebra_gamma_range():
    with pytest.raises(SingularC):
        build_algebra(1.0)
    with pytest.raises(InvalidParameter):
        build_algebra(-0.1)
    alg = build_algebra(0.0)
    np.testing.assert_array_equal(alg.T_matrix, B @ np.linalg.inv(rate_mixing_matrix(0.0)))


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 0.95))
def test_inverse_accuracy(g):
    alg = build_algebra(g)
    np.testing.assert_allclose(alg.C @ alg.C_inv, np.eye(4), atol=1e-12)


def test_C_maps_profile_to_cell_rates():
    model = OutcomeModel(Family.POISSON_FIG2, 0.5)
    prof = ActionProfile.of((3, 1), (2, 4))
    np.testing.assert_allclose(build_algebra(0.5).C @ profile_vector(prof), cell_rates(model, prof))


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 0.95), rates, rates, rates, rates)
def test_T_is_exact_on_expected_means(g, l1, c1, l2, c2):
    alg = build_algebra(g)
    prof = ActionProfile.of((l1, c1), (l2, c2))
    T = compute_T(alg, alg.C @ profile_vector(prof))
    np.testing.assert_allclose(T, [l1 + c1, l2 + c2], rtol=1e-10)


def test_printed_matrix_matches_dense():
    for g in (0.0, 0.3, 0.5, 0.9):
        prof = ActionProfile.of((3, 1), (4, 2))
        alg = build_algebra(g)
        np.testing.assert_allclose(printed_covariance(alg, prof), statistic_covariance(alg, prof), rtol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 0.95), rates, rates, rates, rates)
def test_exact_pairwise_variance_matches_dense(g, l1, c1, l2, c2):
    alg = build_algebra(g)
    prof = ActionProfile.of((l1, c1), (l2, c2))
    S = statistic_covariance(alg, prof)
    dense = S[0, 0] + S[1, 1] - 2 * S[0, 1]
    assert pairwise_variance_exact(alg, prof) == pytest.approx(dense, rel=1e-10)
    # the published simplification is off by exactly (1 - g^2)^2
    assert pairwise_variance_closed_form(alg, prof) == pytest.approx(dense * (1 - g * g) ** 2, rel=1e-10)


def test_pairwise_forms_agree_at_zero_gamma():
    alg = build_algebra(0.0)
    prof = ActionProfile.of((3, 1), (4, 2))
    assert pairwise_variance_closed_form(alg, prof) == pairwise_variance_exact(alg, prof) == 10.0


def test_worked_numbers_gamma_half():
    alg = build_algebra(0.5)
    prof = ActionProfile.of((3, 1), (4, 2))
    S = statistic_covariance(alg, prof)
    assert S[0, 0] + S[1, 1] - 2 * S[0, 1] == pytest.approx(60.0)
    assert pairwise_variance_closed_form(alg, prof) == pytest.approx(33.75)


def test_nonpositive_cell_rate_rejected():
    with pytest.raises(InvalidParameter):
        statistic_covariance(build_algebra(0.0), ActionProfile.of((0, 1), (1, 0)))
