"""Linear algebra of the two-group interference design.

The profile vector is ordered (lam1, lamc1, lamc2, lam2) and cell means are
ordered (G11, G12, G21, G22) so that ``C @ a`` gives the four cell rates.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import InvalidParameter, SingularC
from .outcome_models import ActionProfile

B = np.array([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]])


@dataclass(frozen=True, eq=False)
class InterferenceAlgebra:
    gamma: float
    B: np.ndarray
    C: np.ndarray
    C_inv: np.ndarray

    @property
    def T_matrix(self) -> np.ndarray:
        return self.B @ self.C_inv


def rate_mixing_matrix(gamma: float) -> np.ndarray:
    g = float(gamma)
    return np.array(
        [
            [1.0, 0.0, g, 0.0],
            [g, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, g],
            [0.0, g, 0.0, 1.0],
        ]
    )


@lru_cache(maxsize=64)
def build_algebra(gamma: float) -> InterferenceAlgebra:
    g = float(gamma)
    if g < 0:
        raise InvalidParameter(f"gamma must be >= 0, got {g}")
    if g >= 1:
        raise SingularC(f"C(gamma) is singular for gamma >= 1 (got {g})")
    C = rate_mixing_matrix(g)
    lu, piv = lu_factor(C)  # partial pivoting
    C_inv = lu_solve((lu, piv), np.eye(4))
    if not np.allclose(C @ C_inv, np.eye(4), rtol=0, atol=1e-12):
        raise SingularC(f"C(gamma={g}) could not be inverted accurately")
    for arr in (C, C_inv):
        arr.setflags(write=False)
    return InterferenceAlgebra(gamma=g, B=B, C=C, C_inv=C_inv)


def profile_vector(profile: ActionProfile) -> np.ndarray:
    (l1, c1), (l2, c2) = (a.params for a in profile)
    return np.array([l1, c1, c2, l2])


def compute_T(alg: InterferenceAlgebra, cell_means) -> np.ndarray:
    """T = B C^{-1} Y; accepts one vector of 4 means or rows of them."""
    y = np.asarray(cell_means, dtype=float)
    return y @ alg.T_matrix.T


def statistic_covariance(alg: InterferenceAlgebra, profile: ActionProfile) -> np.ndarray:
    """Asymptotic covariance of sqrt(m/4) (T - chi(A)), evaluated densely."""
    d = alg.C @ profile_vector(profile)
    if np.any(d <= 0):
        raise InvalidParameter("cell rates must be positive")
    M = alg.T_matrix
    return M @ np.diag(d) @ M.T


def printed_covariance(alg: InterferenceAlgebra, profile: ActionProfile) -> np.ndarray:
    """The same covariance from its entrywise closed form in the d_i."""
    g = alg.gamma
    d1, d2, d3, d4 = alg.C @ profile_vector(profile)
    s = d1 + d2 + d3 + d4
    g2 = g * g
    return np.array(
        [
            [d1 + g2 * d2 + d3 + g2 * d4, -g * s],
            [-g * s, g2 * d1 + d2 + g2 * d3 + d4],
        ]
    ) / (1 - g2) ** 2


def pairwise_variance_closed_form(alg: InterferenceAlgebra, profile: ActionProfile) -> float:
    """(1+g)^3 (chi1 + chi2), the simplified pairwise variance as published.

    This drops the 1/(1-g^2)^2 prefactor of the covariance matrix and agrees
    with the dense evaluation only at g = 0; see ``pairwise_variance_exact``.
    """
    chi = B @ profile_vector(profile)
    return (1 + alg.gamma) ** 3 * float(chi.sum())


def pairwise_variance_exact(alg: InterferenceAlgebra, profile: ActionProfile) -> float:
    """(1+g) (chi1 + chi2) / (1-g)^2, the pairwise variance with the prefactor kept."""
    g = alg.gamma
    chi = B @ profile_vector(profile)
    return (1 + g) * float(chi.sum()) / (1 - g) ** 2
