import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from selfdistill.errors import InputError
from selfdistill.estimators import xi_to_xibar
from selfdistill.risk import excess_risk_closed, quadratic_coefficients
from selfdistill.solver import solve_xibar_argmin
from selfdistill.tuner import (
    fit_quadratic_from_evals,
    probe_count,
    probe_design,
    quadratic_features,
    r_squared,
    tune,
    validation_mse,
)


def test_probe_sets_for_small_k():
    np.testing.assert_array_equal(probe_design(1).probes.ravel(), [-1.0, 0.0, 1.0])
    two = probe_design(2)
    np.testing.assert_array_equal(two.probes, [(0, 0), (0, 1), (0, -1), (1, 1), (1, -1), (0.5, 1)])
    np.testing.assert_allclose(two.xibars, [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (0.5, 0.5)])


@pytest.mark.parametrize("k", range(1, 9))
def test_probe_design_count_and_conditioning(k):
    design = probe_design(k)
    assert design.count == probe_count(k) == k * (k + 3) // 2 + 1
    m = design.design_matrix()
    assert np.linalg.matrix_rank(m) == m.shape[1]
    assert np.linalg.cond(m) < 1e6
    for xi, xb in zip(design.probes, design.xibars):
        np.testing.assert_allclose(xi_to_xibar(xi).xibar, xb, atol=1e-15)


def test_probe_design_rejects_k0():
    with pytest.raises(InputError):
        probe_design(0)


@given(st.integers(1, 4), st.integers(0, 1000))
def test_exact_recovery_of_known_quadratic(k, seed):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((k, k))
    mm, mv, c = g @ g.T, rng.standard_normal(k), float(rng.standard_normal())
    f = lambda x: float(x @ mm @ x + 2 * x @ mv + c)
    evals = [(xb, f(xb)) for xb in probe_design(k).xibars]
    q = fit_quadratic_from_evals(evals)
    np.testing.assert_allclose(q.m_matrix, mm, atol=1e-10)
    np.testing.assert_allclose(q.m_vector, mv, atol=1e-10)
    assert q.c_scalar == pytest.approx(c, abs=1e-10)
    assert r_squared(q, evals) == pytest.approx(1.0)


def test_recovers_closed_form_risk_quadratic(rank4):
    for k in (1, 2, 3):
        truth = quadratic_coefficients(rank4, 0.3, k)
        evals = [(xb, excess_risk_closed(rank4, 0.3, xb).excess_risk) for xb in probe_design(k).xibars]
        q = fit_quadratic_from_evals(evals)
        np.testing.assert_allclose(q.m_matrix, truth.m_matrix, rtol=1e-8, atol=1e-14)
        np.testing.assert_allclose(q.m_vector, truth.m_vector, rtol=1e-8, atol=1e-14)
        assert q.c_scalar == pytest.approx(truth.c_scalar, rel=1e-8)


def test_overdetermined_fit_and_errors():
    pts = np.linspace(-2, 2, 9)[:, None]
    evals = [(p, 3 * p[0] ** 2 - p[0] + 1) for p in pts]
    q = fit_quadratic_from_evals(evals)
    assert q.m_matrix[0, 0] == pytest.approx(3.0) and q.m_vector[0] == pytest.approx(-0.5)
    with pytest.raises(InputError):
        fit_quadratic_from_evals(evals[:2])
    with pytest.raises(InputError):
        fit_quadratic_from_evals([(np.array([1.0]), 1.0)] * 3)
    with pytest.raises(InputError):
        fit_quadratic_from_evals([])


def test_quadratic_features_layout():
    np.testing.assert_array_equal(quadratic_features(np.array([[2.0, 3.0]])), [[1, 2, 3, 4, 6, 9]])


def _random_design(seed, n=2000, d=8, noise=1.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d)) * np.linspace(0.5, 2.0, d)
    theta = rng.standard_normal(d)
    y = x @ theta + noise * rng.standard_normal(n)
    cut = (int(0.3 * n), int(0.6 * n))
    return (x[: cut[0]], y[: cut[0]]), (x[cut[0] : cut[1]], y[cut[0] : cut[1]]), (x[cut[1] :], y[cut[1] :])


def test_k0_is_plain_ridge_selection():
    train, val, _ = _random_design(0)
    grid = [0.1, 1.0, 10.0, 100.0]
    res = tune(train, val, grid, k=0)
    from selfdistill.estimators import fit_ridge

    scores = [validation_mse(fit_ridge(train[0].T, train[1], lam).theta_hat, *val) for lam in grid]
    assert res.lam == grid[int(np.argmin(scores))]
    assert res.validation_mse == pytest.approx(min(scores))
    assert res.xi.size == 0


def test_more_steps_never_hurt_on_validation():
    train, val, _ = _random_design(1, noise=3.0)
    mses = [tune(train, val, k=k).validation_mse for k in (0, 1, 2)]
    assert mses[2] <= mses[1] + 1e-12 and mses[1] <= mses[0] + 1e-12


def test_k1_probe_argmin_matches_dense_grid():
    train, val, _ = _random_design(2, noise=2.0)
    lam = 10.0
    res = tune(train, val, [lam], k=1)
    grid = np.linspace(-4, 4, 801)
    from selfdistill.estimators import fit_sd_recursive

    scores = [validation_mse(fit_sd_recursive(train[0].T, train[1], lam, [g]).theta_hat, *val) for g in grid]
    step = grid[1] - grid[0]
    assert abs(res.xi[0] - grid[int(np.argmin(scores))]) <= step


def test_tune_is_deterministic_and_traced():
    train, val, _ = _random_design(3)
    a = tune(train, val, [1.0, 10.0], k=2)
    b = tune(train, val, [1.0, 10.0], k=2)
    assert a.to_dict() == b.to_dict()
    assert len(a.trace) == 2 * probe_count(2)
    assert {row["lambda"] for row in a.curve} == {1.0, 10.0}


def test_ties_go_to_larger_lambda():
    # zero features: every penalty fits theta = 0
    x = np.zeros((20, 2))
    y = np.arange(20.0)
    res = tune((x, y), (x, y), [0.1, 1.0, 10.0], k=0)
    assert res.lam == 10.0


def test_bad_splits():
    with pytest.raises(InputError):
        tune((np.zeros((0, 2)), np.zeros(0)), (np.zeros((3, 2)), np.zeros(3)), [1.0], k=1)
    with pytest.raises(InputError):
        tune((np.ones((3, 2)), np.zeros(3)), (np.ones((3, 3)), np.zeros(3)), [1.0], k=1)
    with pytest.raises(InputError):
        tune((np.ones((3, 2)), np.zeros(3)), (np.ones((3, 2)), np.zeros(3)), [1.0], k=-1)


@given(arrays(float, 3, elements=st.floats(-2, 2)))
def test_argmin_of_fitted_quadratic_matches_direct_argmin(shift):
    mm = np.diag([1.0, 2.0, 3.0])
    f = lambda x: float((x - shift) @ mm @ (x - shift))
    q = fit_quadratic_from_evals([(xb, f(xb)) for xb in probe_design(3).xibars])
    np.testing.assert_allclose(solve_xibar_argmin(q).xibar, shift, atol=1e-9)
