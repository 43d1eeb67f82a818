import numpy as np
import pytest

from flatopt.backward_error import (
    backward_error_trajectory_check,
    delta_order_study,
    discrete_expected_mfvi_path,
    discrete_sam_path,
)
from flatopt.errors import DimensionTooLarge
from flatopt.objectives import quadratic_objective

RHO = 1e-4  # perturbation scale far below delta so the O(delta) terms dominate
SIGMA2 = np.full(2, RHO**2 / 2)
MU0 = np.array([1.0, -2.0])
OBJ = quadratic_objective([1.0, 3.0])


def test_sam_iterates_track_modified_flow():
    comparison = backward_error_trajectory_check("sam", OBJ, MU0, 0.01, 100, SIGMA2)
    assert comparison.modified_is_closer
    assert comparison.deviation_from_modified * 2 < comparison.deviation_from_original
    # the effective-gradient variant of the correction is also integrated
    assert comparison.deviation_from_intermediate is not None
    assert comparison.deviation_from_intermediate < comparison.deviation_from_original


def test_mfvi_expected_iterates_track_modified_flow():
    comparison = backward_error_trajectory_check("mfvi", OBJ, MU0, 0.01, 100, SIGMA2, seed=1)
    assert comparison.modified_is_closer
    assert comparison.deviation_from_modified * 2 < comparison.deviation_from_original
    assert comparison.deviation_from_intermediate is None


def test_sam_deviation_orders_under_delta_halving():
    study = delta_order_study("sam", OBJ, MU0, 0.01, 100, SIGMA2)
    assert 0.8 <= study["slope_original"] <= 1.2
    assert 1.6 <= study["slope_modified"] <= 2.4


def test_mfvi_deviation_orders_under_delta_halving():
    study = delta_order_study("mfvi", OBJ, MU0, 0.01, 100, SIGMA2, seed=1)
    assert 0.8 <= study["slope_original"] <= 1.2
    assert 1.6 <= study["slope_modified"] <= 2.4


def test_stationary_start_never_moves():
    # minimum of the quadratic: all paths and flows stay put
    obj = quadratic_objective([1.0, 3.0], b=[2.0, -3.0])
    mu_star = np.array([2.0, -1.0])
    assert np.allclose(obj.gradient(mu_star), 0.0)
    comparison = backward_error_trajectory_check("sam", obj, mu_star, 0.01, 50, SIGMA2)
    assert comparison.deviation_from_original == 0.0
    assert comparison.deviation_from_modified == 0.0
    comparison = backward_error_trajectory_check("mfvi", obj, mu_star, 0.01, 50, np.zeros(2))
    assert comparison.deviation_from_original == 0.0
    assert comparison.deviation_from_modified == 0.0


def test_expected_mfvi_update_is_exact_on_quadratics():
    # antithetic averaging makes the expected step equal the plain GD step
    path = discrete_expected_mfvi_path(OBJ, MU0, np.full(2, 0.01), 0.05, 10, n_eta=4, seed=0)
    mu = MU0.copy()
    for _ in range(10):
        mu = mu - 0.05 * OBJ.gradient(mu)
    assert np.allclose(path[-1], mu, rtol=1e-12, atol=1e-14)


def test_discrete_sam_path_matches_manual_iteration():
    from flatopt.optimizers import sam_perturbation

    path = discrete_sam_path(OBJ, MU0, SIGMA2, 0.02, 5)
    mu = MU0.copy()
    for _ in range(5):
        eps, _ = sam_perturbation(mu, OBJ.gradient(mu), SIGMA2)
        mu = mu - 0.02 * OBJ.gradient(mu + eps)
    assert np.allclose(path[-1], mu, atol=1e-15)


def test_dimension_guard():
    big = quadratic_objective(np.ones(11))
    with pytest.raises(DimensionTooLarge):
        backward_error_trajectory_check("sam", big, np.ones(11), 0.01, 10, np.full(11, 1e-8))


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        backward_error_trajectory_check("adam", OBJ, MU0, 0.01, 10, SIGMA2)
