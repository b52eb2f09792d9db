import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from selfdistill.errors import DegenerateParametrizationError, InputError
from selfdistill.estimators import (
    MAX_STEPS,
    SdParams,
    fit_full_two_step,
    fit_ridge,
    fit_sd_preconditioner,
    fit_sd_recursive,
    full_two_step_equivalent,
    preconditioner_matrix,
    sd_path,
    shrinkage_factors,
    xi_to_xibar,
    xibar_preimage,
    xibar_to_xi,
)
from selfdistill.spectral import ProblemInstance, decompose

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def _problem(seed, d=5, n=7, rank=None):
    rng = np.random.default_rng(seed)
    rank = rank or min(d, n)
    x = rng.standard_normal((d, rank)) @ rng.standard_normal((rank, n))
    return x, rng.standard_normal(n)


# reparametrization ---------------------------------------------------------


def test_two_step_map_matches_explicit_form():
    xi1, xi2 = 0.3, -1.7
    np.testing.assert_allclose(xi_to_xibar([xi1, xi2]).xibar, [(1 - xi1) * xi2, xi1 * xi2])


def test_two_step_inverse_explicit_form():
    xb = np.array([0.8, -0.3])
    s = xb.sum()
    np.testing.assert_allclose(xibar_to_xi(xb), [1 - xb[0] / s, s])


def test_three_step_inverse_explicit_form():
    # frozen by hand: xibar = (1, 2, 3) -> xi = (3/5, 5/6, 6)
    np.testing.assert_allclose(xibar_to_xi([1.0, 2.0, 3.0]), [0.6, 5 / 6, 6.0], rtol=1e-15)
    xb = np.array([0.4, -1.1, 2.5])
    expected = [1 - xb[1] / (xb[1] + xb[2]), 1 - xb[0] / xb.sum(), xb.sum()]
    np.testing.assert_allclose(xibar_to_xi(xb), expected, rtol=1e-14)


def test_one_step_is_identity():
    np.testing.assert_array_equal(xi_to_xibar([0.42]).xibar, [0.42])
    np.testing.assert_array_equal(xibar_to_xi([0.42]), [0.42])


@given(arrays(float, st.integers(1, 8), elements=finite))
def test_forward_map_matches_polynomial_oracle(xi):
    np.testing.assert_allclose(xi_to_xibar(xi).xibar, oracles.xibar(xi), rtol=1e-12, atol=1e-12)


@given(arrays(float, st.integers(1, 6), elements=st.floats(-3, 3)))
def test_roundtrip(xi):
    assume(np.all(np.abs(xi[1:]) > 1e-3))  # nonzero suffix products
    back = xibar_to_xi(xi_to_xibar(xi))
    np.testing.assert_allclose(back, xi, rtol=1e-9, atol=1e-10)


def test_degenerate_inverse_raises_and_preimage_recovers():
    with pytest.raises(DegenerateParametrizationError):
        xibar_to_xi([2.0, -2.0])
    pre = xibar_preimage([1.0, 0.0, 0.0])
    np.testing.assert_allclose(xi_to_xibar(pre).xibar, [1.0, 0.0, 0.0])
    with pytest.raises(DegenerateParametrizationError):
        xibar_preimage([2.0, -2.0])
    with pytest.raises(DegenerateParametrizationError):
        xibar_to_xi([1.0, -1.0, 0.0])


def test_full_two_step_map():
    np.testing.assert_allclose(full_two_step_equivalent([0.5, 0.2, 2.0]).xibar, [0.2 + 2.0 - 1.0, 1.0])
    # with no weight on the ridge teacher it is the repeated form
    xi1, xi2 = 0.7, -0.4
    np.testing.assert_allclose(full_two_step_equivalent([xi1, 0.0, xi2]).xibar, xi_to_xibar([xi1, xi2]).xibar)


# fits ----------------------------------------------------------------------


def test_ridge_matches_augmented_lstsq():
    x, y = _problem(0)
    np.testing.assert_allclose(fit_ridge(x, y, 0.7).theta_hat, oracles.ridge(x, y, 0.7), rtol=1e-10)


def test_recursive_matches_oracle_loop():
    x, y = _problem(1, rank=3)
    xi = [0.4, -2.0, 1.5]
    np.testing.assert_allclose(fit_sd_recursive(x, y, 0.3, xi).theta_hat, oracles.sd(x, y, 0.3, xi), rtol=1e-9, atol=1e-12)


def test_zero_xi_is_ridge():
    x, y = _problem(2)
    np.testing.assert_allclose(fit_sd_recursive(x, y, 1.0, [0.0, 0.0]).theta_hat, fit_ridge(x, y, 1.0).theta_hat)


def test_path_length_and_matrix_responses():
    x, y = _problem(3)
    path = sd_path(x, y, 0.5, [0.1, 0.2, 0.3])
    assert len(path) == 4
    ymat = np.column_stack([y, 2 * y])
    theta = fit_sd_recursive(x, ymat, 0.5, [0.1, 0.2]).theta_hat
    np.testing.assert_allclose(theta[:, 1], 2 * theta[:, 0])


def test_step_cap():
    x, y = _problem(4)
    with pytest.raises(InputError):
        fit_sd_recursive(x, y, 1.0, np.zeros(MAX_STEPS + 1))


@pytest.mark.parametrize("lam", [0.0, -1.0, np.inf, np.nan])
def test_bad_lambda(lam):
    x, y = _problem(5)
    with pytest.raises(InputError):
        fit_ridge(x, y, lam)
    with pytest.raises(InputError):
        SdParams(lam, [0.1])


def test_shape_mismatch():
    x, y = _problem(6)
    with pytest.raises(InputError):
        fit_ridge(x, y[:-1], 1.0)


@given(
    st.integers(0, 10_000),
    st.floats(1e-2, 1e2),
    arrays(float, st.integers(1, 4), elements=st.floats(-3, 3)),
)
def test_recursive_equals_preconditioner(seed, lam, xi):
    x, y = _problem(seed, d=5, n=6, rank=4)
    rec = fit_sd_recursive(x, y, lam, xi).theta_hat
    pre = fit_sd_preconditioner(x, y, lam, xi_to_xibar(xi)).theta_hat
    scale = max(1.0, np.abs(rec).max())
    np.testing.assert_allclose(pre, rec, atol=1e-9 * scale)


def test_preconditioner_accepts_instance_and_matches_dense_matrix():
    x, y = _problem(7, rank=3)
    inst = ProblemInstance(x, np.zeros(5), 1.0)
    xb = np.array([0.5, -0.25])
    a = fit_sd_preconditioner(inst, y, 0.9, xb).theta_hat
    b = preconditioner_matrix(x, 0.9, xb) @ fit_ridge(x, y, 0.9).theta_hat
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_shrinkage_factors_limits():
    s = np.array([1.0, 0.5])
    np.testing.assert_array_equal(shrinkage_factors(s, 1.0, []), [1.0, 1.0])
    # xibar = e_1 gives factor a_j
    a = s**2 / (1.0 + s**2)
    np.testing.assert_allclose(shrinkage_factors(s, 1.0, [1.0]), a)


def test_full_two_step_fit_matches_mapped_repeated_form():
    x, y = _problem(8)
    rng = np.random.default_rng(8)
    for xt in rng.standard_normal((20, 3)):
        full = fit_full_two_step(x, y, 0.6, xt).theta_hat
        mapped = fit_sd_preconditioner(x, y, 0.6, full_two_step_equivalent(xt)).theta_hat
        np.testing.assert_allclose(full, mapped, atol=1e-11)


def test_provenance_records_parameters():
    x, y = _problem(9)
    w = fit_sd_recursive(x, y, 0.5, [0.2])
    assert w.provenance == {"lambda": 0.5, "k": 1, "xi": [0.2], "method": "recursive"}
    assert w.to_dict()["provenance"]["method"] == "recursive"


def test_rank_deficient_directions_get_zero_weight():
    x, y = _problem(10, d=6, n=4, rank=2)
    spec = decompose(x)
    theta = fit_sd_preconditioner(x, y, 0.5, [0.3]).theta_hat
    null = spec.left_vectors[:, spec.rank :]
    np.testing.assert_allclose(null.T @ theta, 0.0, atol=1e-12)
