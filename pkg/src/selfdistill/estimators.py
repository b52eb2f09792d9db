"""Ridge and k-step self-distillation estimators.

Two independent routes produce the k-step estimator:

* :func:`fit_sd_recursive` runs the distillation loop literally: each step
  refits ridge on labels ``xi_i * X^T theta_{i-1} + (1 - xi_i) * y``.
* :func:`fit_sd_preconditioner` works in the singular basis of ``X``, where
  the estimator is a polynomial preconditioner applied to ridge and is linear
  in the reparametrized vector ``xibar``.

``y`` may be a vector of length ``n`` or an ``n x m`` matrix of responses; the
estimators are linear in ``y`` so every column is fitted independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DegenerateParametrizationError, InputError
from .spectral import ProblemInstance, Spectrum, decompose

MAX_STEPS = 64


@dataclass(frozen=True)
class SdParams:
    """Ridge penalty plus imitation vector; an empty ``xi`` means plain ridge."""

    lam: float
    xi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        _check_lambda(self.lam)
        if not np.all(np.isfinite(xi)):
            raise InputError("xi has non-finite entries")
        object.__setattr__(self, "xi", xi)

    @property
    def k(self) -> int:
        return self.xi.size

    def xibar(self) -> "XiBar":
        return xi_to_xibar(self.xi)


@dataclass(frozen=True)
class XiBar:
    """Reparametrized imitation vector (coefficients of ``P^i`` in the preconditioner)."""

    xibar: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.xibar, dtype=float))
        if not np.all(np.isfinite(v)):
            raise InputError("xibar has non-finite entries")
        object.__setattr__(self, "xibar", v)

    @property
    def k(self) -> int:
        return self.xibar.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.xibar, dtype=dtype)


@dataclass
class EstimatorWeights:
    theta_hat: np.ndarray
    provenance: dict

    def to_dict(self) -> dict:
        return {"theta_hat": np.asarray(self.theta_hat).tolist(), "provenance": self.provenance}


def _check_lambda(lam: float) -> None:
    if not (np.isfinite(lam) and lam > 0):
        raise InputError(f"lambda must be finite and > 0, got {lam}")


def _check_xy(x_matrix, y):
    x = np.asarray(x_matrix, dtype=float)
    yy = np.asarray(y, dtype=float)
    if x.ndim != 2:
        raise InputError("x_matrix must be 2-D (d x n)")
    if yy.shape[0] != x.shape[1]:
        raise InputError(f"y has {yy.shape[0]} rows, expected n={x.shape[1]}")
    return x, yy


def _as_xibar(xibar) -> np.ndarray:
    if isinstance(xibar, XiBar):
        return xibar.xibar
    return np.atleast_1d(np.asarray(xibar, dtype=float))


# ---------------------------------------------------------------------------
# reparametrization
# ---------------------------------------------------------------------------


def xi_to_xibar(xi: Sequence[float]) -> XiBar:
    """``xibar_i = (1 - xi_{k-i}) * prod_{l=k-i+1}^{k} xi_l`` with ``xi_0 = 0``."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    k = xi.size
    padded = np.concatenate([[0.0], xi])  # padded[l] == xi_l
    out = np.empty(k)
    prod = 1.0
    for i in range(1, k + 1):
        prod *= padded[k - i + 1]
        out[i - 1] = (1.0 - padded[k - i]) * prod
    return XiBar(out)


def xibar_to_xi(xibar) -> np.ndarray:
    """Inverse of :func:`xi_to_xibar`.

    The suffix sums ``T_m = sum_{i >= m} xibar_i`` equal the products
    ``prod_{l=k-m+1}^{k} xi_l``, so ``xi_k = T_1`` and
    ``xi_{k-m+1} = T_m / T_{m-1}``. A zero divisor means the point has no
    unique preimage.
    """
    v = _as_xibar(xibar)
    k = v.size
    tails = np.cumsum(v[::-1])[::-1]  # tails[m-1] == T_m
    xi = np.empty(k)
    if k == 0:
        return xi
    xi[k - 1] = tails[0]
    for m in range(2, k + 1):
        if tails[m - 2] == 0.0:
            raise DegenerateParametrizationError(
                f"suffix sum T_{m - 1} of xibar is zero; xi is not identifiable"
            )
        xi[k - m] = tails[m - 1] / tails[m - 2]
    return xi


def xibar_preimage(xibar) -> np.ndarray:
    """Some ``xi`` with ``xi_to_xibar(xi) == xibar``, tolerating zero suffix sums.

    Where a suffix sum vanishes the remaining leading entries are unidentified
    and are set to zero. Raises if ``xibar`` is outside the image of the map
    (a zero suffix sum followed by a nonzero one).
    """
    v = _as_xibar(xibar)
    k = v.size
    tails = np.cumsum(v[::-1])[::-1]
    xi = np.zeros(k)
    if k == 0:
        return xi
    xi[k - 1] = tails[0]
    for m in range(2, k + 1):
        if tails[m - 2] == 0.0:
            if np.any(tails[m - 1:] != 0.0):
                raise DegenerateParametrizationError("xibar is not reachable from any xi")
            break
        xi[k - m] = tails[m - 1] / tails[m - 2]
    return xi


def full_two_step_equivalent(xi_tilde: Sequence[float]) -> XiBar:
    """Map full 2-step parameters ``(xi_1, xi_2a, xi_2b)`` to the repeated-form ``xibar``.

    ``xi_2a`` weights the ridge teacher and ``xi_2b`` the 1-step teacher when
    fitting the second student.
    """
    x1, x2a, x2b = np.asarray(xi_tilde, dtype=float).ravel()
    return XiBar(np.array([x2a + x2b - x1 * x2b, x1 * x2b]))


# ---------------------------------------------------------------------------
# fits
# ---------------------------------------------------------------------------


def fit_ridge(x_matrix, y, lam: float) -> EstimatorWeights:
    """``(X X^T + lam I)^{-1} X y``."""
    _check_lambda(lam)
    x, yy = _check_xy(x_matrix, y)
    omega = x @ x.T + lam * np.eye(x.shape[0])
    theta = cho_solve(cho_factor(omega), x @ yy)
    return EstimatorWeights(theta, {"lambda": float(lam), "k": 0, "method": "ridge"})


def sd_path(x_matrix, y, lam: float, xi: Sequence[float]) -> list[np.ndarray]:
    """All intermediate estimators ``theta_0 (ridge), theta_1, ..., theta_k``.

    Only the last one is tuned for by ``xi``; the intermediate ones carry no
    optimality guarantee.
    """
    _check_lambda(lam)
    x, yy = _check_xy(x_matrix, y)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.size > MAX_STEPS:
        raise InputError(f"k={xi.size} exceeds the step cap {MAX_STEPS}")
    factor = cho_factor(x @ x.T + lam * np.eye(x.shape[0]))
    ridge = cho_solve(factor, x @ yy)
    path = [ridge]
    theta = ridge
    for step in xi:
        teacher_labels = x.T @ theta
        theta = cho_solve(factor, x @ (step * teacher_labels + (1.0 - step) * yy))
        path.append(theta)
    return path


def fit_sd_recursive(x_matrix, y, lam: float, xi: Sequence[float]) -> EstimatorWeights:
    """k-step self-distillation by literally re-fitting on mixed labels."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    theta = sd_path(x_matrix, y, lam, xi)[-1]
    return EstimatorWeights(
        theta,
        {"lambda": float(lam), "k": int(xi.size), "xi": xi.tolist(), "method": "recursive"},
    )


def fit_full_two_step(x_matrix, y, lam: float, xi_tilde: Sequence[float]) -> EstimatorWeights:
    """Second student supervised by both the ridge teacher and the 1-step student."""
    _check_lambda(lam)
    x, yy = _check_xy(x_matrix, y)
    x1, x2a, x2b = np.asarray(xi_tilde, dtype=float).ravel()
    factor = cho_factor(x @ x.T + lam * np.eye(x.shape[0]))
    theta0 = cho_solve(factor, x @ yy)
    theta1 = cho_solve(factor, x @ (x1 * (x.T @ theta0) + (1.0 - x1) * yy))
    labels = x2a * (x.T @ theta0) + x2b * (x.T @ theta1) + (1.0 - x2a - x2b) * yy
    theta2 = cho_solve(factor, x @ labels)
    return EstimatorWeights(
        theta2,
        {"lambda": float(lam), "k": 2, "xi_tilde": [x1, x2a, x2b], "method": "full-2-step"},
    )


def shrinkage_factors(s: np.ndarray, lam: float, xibar) -> np.ndarray:
    """Per-direction multiplier ``1 - sum_i xibar_i (1 - a_j^i)``, ``a_j = s_j^2/(lam+s_j^2)``."""
    v = _as_xibar(xibar)
    s = np.asarray(s, dtype=float)
    if v.size == 0:
        return np.ones_like(s)
    a = s**2 / (lam + s**2)
    powers = np.arange(1, v.size + 1)
    with np.errstate(divide="ignore"):
        loga = np.log(a)
    # 1 - a^i computed as -expm1(i log a) to keep precision when a is near 1
    one_minus = -np.expm1(np.outer(loga, powers))
    return 1.0 - one_minus @ v


def fit_sd_preconditioner(
    instance_or_matrix, y, lam: float, xibar, spectrum: Optional[Spectrum] = None
) -> EstimatorWeights:
    """k-step estimator assembled in the singular basis of ``X``.

    The coefficient on ``u_j`` is ``f_j * s_j / (lam + s_j^2) * <y, v_j>`` with
    ``f_j`` from :func:`shrinkage_factors`.
    """
    _check_lambda(lam)
    if isinstance(instance_or_matrix, ProblemInstance):
        x = instance_or_matrix.x_matrix
        spectrum = instance_or_matrix.spectrum
    else:
        x = np.asarray(instance_or_matrix, dtype=float)
        if spectrum is None:
            spectrum = decompose(x)
    _, yy = _check_xy(x, y)
    v = _as_xibar(xibar)
    if v.size > MAX_STEPS:
        raise InputError(f"k={v.size} exceeds the step cap {MAX_STEPS}")
    r = spectrum.rank
    s = spectrum.singular_values[:r]
    gain = shrinkage_factors(s, lam, v) * s / (lam + s**2)
    proj = spectrum.right_vectors[:, :r].T @ yy
    coef = gain * proj if proj.ndim == 1 else gain[:, None] * proj
    theta = spectrum.left_vectors[:, :r] @ coef
    return EstimatorWeights(
        theta,
        {"lambda": float(lam), "k": int(v.size), "xibar": v.tolist(), "method": "preconditioner"},
    )


def preconditioner_matrix(x_matrix, lam: float, xibar) -> np.ndarray:
    """Dense ``(1 - sum xibar) I + sum_i xibar_i (Omega^{-1} X X^T)^i`` for checks."""
    _check_lambda(lam)
    x = np.asarray(x_matrix, dtype=float)
    v = _as_xibar(xibar)
    d = x.shape[0]
    gram = x @ x.T
    p = np.linalg.solve(gram + lam * np.eye(d), gram)
    out = (1.0 - v.sum()) * np.eye(d)
    power = np.eye(d)
    for coef in v:
        power = power @ p
        out = out + coef * power
    return out
