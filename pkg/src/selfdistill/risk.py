"""Fixed-design excess risk of ridge and k-step self-distillation.

Risk is measured in the empirical-covariance norm,
``E ||theta_hat - theta*||^2_{Sigma_n}`` with ``Sigma_n = X X^T / n``. In the
singular basis every quantity splits into independent per-direction terms
indexed by ``j <= rank``; with ``rho_j = lam / s_j^2`` and
``C_j(i) = 1 - (1 + rho_j)^{-i}`` the k-step risk is the quadratic
``xibar^T M xibar + 2 xibar^T m + c``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import InputError
from .estimators import _as_xibar, _check_lambda, fit_sd_recursive, shrinkage_factors, xi_to_xibar
from .spectral import ProblemInstance


@dataclass
class QuadraticRisk:
    """Coefficients of a quadratic ``q(x) = x^T M x + 2 x^T m + c``.

    When produced by :func:`quadratic_coefficients` the bias/variance split and
    the per-direction ``rho`` and ``C_j(i)`` tables are filled in; quadratics
    fitted from data leave them as ``None``. The same closed-form quadratics
    also carry a least-squares factor: ``q(x) = ||G x - h||^2 + const`` with
    ``G = ls_matrix`` and ``h = ls_target``, which minimizes far more
    accurately than ``M`` itself when the powers ``a_j^i`` are nearly collinear.
    ``ls_shrink`` holds ``1 - a_j = rho_j / (1 + rho_j)`` for the rows of ``G``.
    """

    m_matrix: np.ndarray
    m_vector: np.ndarray
    c_scalar: float
    lam: float = float("nan")
    rho: Optional[np.ndarray] = None
    c_coeffs: Optional[np.ndarray] = None
    bias_matrix: Optional[np.ndarray] = None
    bias_vector: Optional[np.ndarray] = None
    bias_const: Optional[float] = None
    var_matrix: Optional[np.ndarray] = None
    var_vector: Optional[np.ndarray] = None
    var_const: Optional[float] = None
    ls_matrix: Optional[np.ndarray] = None
    ls_target: Optional[np.ndarray] = None
    ls_shrink: Optional[np.ndarray] = None

    @property
    def k(self) -> int:
        return self.m_vector.size

    def __call__(self, xibar) -> float:
        x = _as_xibar(xibar)
        return float(x @ self.m_matrix @ x + 2.0 * x @ self.m_vector + self.c_scalar)

    def to_dict(self) -> dict:
        out = {
            "lambda": self.lam,
            "M": np.asarray(self.m_matrix).tolist(),
            "m": np.asarray(self.m_vector).tolist(),
            "c": self.c_scalar,
        }
        if self.rho is not None:
            out["rho"] = self.rho.tolist()
            out["C"] = self.c_coeffs.tolist()
        return out


@dataclass
class RiskReport:
    excess_risk: float
    bias_part: float
    variance_part: float
    method: str
    standard_error: float = 0.0
    trials: int = 0

    def to_dict(self) -> dict:
        return {
            "excess_risk": self.excess_risk,
            "bias": self.bias_part,
            "variance": self.variance_part,
            "method": self.method,
            "standard_error": self.standard_error,
            "trials": self.trials,
        }


def _spectral_parts(instance: ProblemInstance):
    """``(s_j, theta*_j)`` for ``j <= rank``."""
    r = instance.rank
    s = instance.spectrum.singular_values[:r]
    comps = instance.components()[:r]
    return s, comps


def c_table(rho: np.ndarray, k: int) -> np.ndarray:
    """``C_j(i) = 1 - (1 + rho_j)^{-i}`` as an ``r x k`` array."""
    powers = np.arange(1, k + 1)
    return -np.expm1(-np.outer(np.log1p(rho), powers))


def quadratic_coefficients(instance: ProblemInstance, lam: float, k: int) -> QuadraticRisk:
    _check_lambda(lam)
    if k < 0:
        raise InputError("k must be >= 0")
    n = instance.n_samples
    g2 = instance.gamma2
    s, th = _spectral_parts(instance)
    rho = lam / s**2
    denom = (1.0 + rho) ** 2
    cc = c_table(rho, k)

    bias_w = s**2 * th / denom / n  # == lam * th / (rho (1+rho)^2) / n
    var_w = g2 / denom / n
    bias_lin = lam * th / denom / n
    var_lin = -g2 / denom / n
    bias_const = float(np.sum(lam * th * rho / denom) / n)
    var_const = float(np.sum(g2 / denom) / n)

    bm = (cc * bias_w[:, None]).T @ cc
    vm = (cc * var_w[:, None]).T @ cc
    bv = cc.T @ bias_lin
    vv = cc.T @ var_lin
    # per direction: w (C x)^2 + 2 l (C x) = w (C x + l / w)^2 - l^2 / w
    weight = bias_w + var_w
    lin = bias_lin + var_lin
    live = weight > 0
    root = np.sqrt(weight[live])
    return QuadraticRisk(
        m_matrix=bm + vm,
        m_vector=bv + vv,
        c_scalar=bias_const + var_const,
        lam=float(lam),
        rho=rho,
        c_coeffs=cc,
        bias_matrix=bm,
        bias_vector=bv,
        bias_const=bias_const,
        var_matrix=vm,
        var_vector=vv,
        var_const=var_const,
        ls_matrix=root[:, None] * cc[live],
        ls_target=-lin[live] / root,
        ls_shrink=rho[live] / (1.0 + rho[live]),
    )


def excess_risk_closed(
    instance: ProblemInstance,
    lam: float,
    xibar,
    method: Literal["spectral", "quadratic"] = "spectral",
) -> RiskReport:
    """Closed-form excess risk at ``(lam, xibar)``.

    ``"spectral"`` sums the per-direction squared errors directly (no
    cancellation for large ``xibar``); ``"quadratic"`` evaluates
    ``xibar^T M xibar + 2 xibar^T m + c``. The two agree algebraically.
    """
    _check_lambda(lam)
    v = _as_xibar(xibar)
    if method == "quadratic":
        q = quadratic_coefficients(instance, lam, v.size)
        bias = float(v @ q.bias_matrix @ v + 2 * v @ q.bias_vector + q.bias_const)
        var = float(v @ q.var_matrix @ v + 2 * v @ q.var_vector + q.var_const)
        return RiskReport(bias + var, bias, var, "closed-quadratic")
    if method != "spectral":
        raise InputError(f"unknown method {method!r}")
    n = instance.n_samples
    s, th = _spectral_parts(instance)
    f = shrinkage_factors(s, lam, v)
    rho = lam / s**2
    a = 1.0 / (1.0 + rho)
    # f a - 1 = -(rho a + a (1 - f)); written without cancellation
    miss = rho * a + a * (1.0 - f)
    bias = float(np.sum(s**2 * th * miss**2) / n)
    var = float(instance.gamma2 * np.sum((a * f) ** 2) / n)
    return RiskReport(bias + var, bias, var, "closed-spectral")


def ridge_risk(instance: ProblemInstance, lam: float) -> RiskReport:
    """``(1/n) sum_j (lam^2 theta*_j + gamma^2 s_j^2) s_j^2 / (lam + s_j^2)^2``."""
    _check_lambda(lam)
    n = instance.n_samples
    s, th = _spectral_parts(instance)
    denom = (lam + s**2) ** 2
    bias = float(np.sum(lam**2 * th * s**2 / denom) / n)
    var = float(instance.gamma2 * np.sum(s**4 / denom) / n)
    return RiskReport(bias + var, bias, var, "ridge-closed")


def ridge_risk_gradient(instance: ProblemInstance, lam: float) -> float:
    """``d/dlam`` of the ridge risk: ``(2/n) sum s^4 (lam theta*_j - gamma^2) / (lam + s^2)^3``."""
    s, th = _spectral_parts(instance)
    return float(2.0 * np.sum(s**4 * (lam * th - instance.gamma2) / (lam + s**2) ** 3) / instance.n_samples)


def lambda_star_residual(instance: ProblemInstance, lam: float) -> float:
    """Relative residual of the ridge optimality fixed point."""
    s, th = _spectral_parts(instance)
    w = s**4 / (lam + s**2) ** 3
    den = np.sum(th * w)
    if den == 0:
        return float("inf")
    rhs = instance.gamma2 * np.sum(w) / den
    return float(abs(lam - rhs) / lam)


def ridge_lambda_star(
    instance: ProblemInstance,
    search_range: tuple[float, float] = (1e-6, 1e6),
    grid_points: int = 241,
) -> float:
    """Global minimizer of the ridge risk over ``search_range``.

    A log-spaced grid brackets the best point, then the root of the risk
    derivative inside the bracket is found. Emits a ``RuntimeWarning`` and
    returns the boundary when the minimum sits on an end of the range.
    """
    lo, hi = search_range
    if not (0 < lo < hi and np.isfinite(hi)):
        raise InputError(f"search_range must be a positive interval, got {search_range}")
    grid = np.logspace(np.log10(lo), np.log10(hi), grid_points)
    values = np.array([ridge_risk(instance, g).excess_risk for g in grid])
    i = int(np.argmin(values))
    if i == 0 or i == grid.size - 1:
        warnings.warn(
            f"ridge risk minimum lies on the search boundary lam={grid[i]:.3g}",
            RuntimeWarning,
            stacklevel=2,
        )
        return float(grid[i])
    a, b = grid[i - 1], grid[i + 1]
    ga, gb = ridge_risk_gradient(instance, a), ridge_risk_gradient(instance, b)
    if ga < 0 < gb:
        return float(brentq(lambda t: ridge_risk_gradient(instance, t), a, b, xtol=1e-300, rtol=1e-15, maxiter=500))
    return float(grid[i])


def lower_bound(instance: ProblemInstance) -> float:
    """``(gamma^2/n) sum_j theta*_j / (theta*_j + gamma^2 / s_j^2)``, the best linear-family risk."""
    s, th = _spectral_parts(instance)
    g2 = instance.gamma2
    num = g2 * th * s**2
    den = th * s**2 + g2
    terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(np.sum(terms) / instance.n_samples)


def optimal_preconditioner(instance: ProblemInstance) -> np.ndarray:
    """Eigenvalues ``theta*_j / (theta*_j s_j^2 + gamma^2)`` of the best preconditioner; zero past the rank."""
    d, r = instance.d, instance.rank
    s, th = _spectral_parts(instance)
    den = th * s**2 + instance.gamma2
    out = np.zeros(d)
    out[:r] = np.divide(th, den, out=np.zeros_like(th), where=th > 0)
    return out


def preconditioner_risk(instance: ProblemInstance, ts: Sequence[float]) -> float:
    """Risk of ``U diag(ts) U^T X y``: bias ``(ts s^2 - 1)^2 theta*_j`` plus variance ``gamma^2 ts^2 s^2``, weighted by ``s^2/n``."""
    ts = np.asarray(ts, dtype=float)
    s = instance.spectrum.s_full
    th = instance.components()
    w = s**2 / instance.n_samples
    return float(np.sum(w * ((ts * s**2 - 1.0) ** 2 * th + instance.gamma2 * ts**2 * s**2)))


DegenerateCase = Literal["equal-singulars", "equal-components"]


def degenerate_case_bounds(instance: ProblemInstance, case: DegenerateCase, tol: float = 1e-9) -> float:
    """Closed-form best risk when the spectrum or theta* has no useful gap.

    ``equal-singulars`` (all nonzero ``s_j = s``):
    ``(r gamma^2/n) / (1 + r gamma^2 / (s^2 Q))`` with ``Q = sum theta*_j``;
    for ``s = 1`` this is the textbook form.
    ``equal-components`` (``theta*_j = z`` for ``j <= r``):
    ``(gamma^2/n) sum_j 1 / (1 + gamma^2 / (z s_j^2))``.
    """
    s, th = _spectral_parts(instance)
    r, n, g2 = s.size, instance.n_samples, instance.gamma2
    if r == 0:
        raise InputError("instance has rank 0")
    if case == "equal-singulars":
        if np.max(np.abs(s - s[0])) > tol * s[0]:
            raise InputError("singular values are not all equal")
        q = float(np.sum(th))
        if q <= 0:
            return r * g2 / n if g2 == 0 else 0.0
        s2 = float(np.mean(s**2))
        return float(r * g2 / n / (1.0 + r * g2 / (s2 * q)))
    if case == "equal-components":
        z = float(np.mean(th))
        if z <= 0 or np.max(np.abs(th - z)) > tol * z:
            raise InputError("theta* components are not all equal and positive")
        return float(g2 / n * np.sum(1.0 / (1.0 + g2 / (z * s**2))))
    raise InputError(f"unknown degenerate case {case!r}")


def strict_dominance_condition(instance: ProblemInstance, lam_star: Optional[float] = None) -> tuple[bool, float]:
    """Whether 1-step SD strictly beats the best ridge, with the diagnostic double sum.

    The sum runs over pairs ``j < k <= r`` of
    ``s_j^4 s_k^4 (s_j^2 - s_k^2)(theta*_k - theta*_j) / ((lam*+s_j^2)^4 (lam*+s_k^2)^4)``
    and the condition holds when it is negative.
    """
    if lam_star is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            lam_star = ridge_lambda_star(instance)
    s, th = _spectral_parts(instance)
    s2 = s**2
    w = s2**2 / (lam_star + s2) ** 4
    diff_s = s2[:, None] - s2[None, :]  # [j, k] = s_j^2 - s_k^2
    diff_t = th[None, :] - th[:, None]  # [j, k] = theta_k - theta_j
    mask = np.triu(np.ones((s.size, s.size), dtype=bool), k=1)
    total = float(np.sum((w[:, None] * w[None, :] * diff_s * diff_t)[mask]))
    return total < 0.0, total


# ---------------------------------------------------------------------------
# Monte-Carlo oracle
# ---------------------------------------------------------------------------


def _batch_seeds(seed: int, trials: int, batch_size: int):
    n_batches = -(-trials // batch_size)
    children = np.random.SeedSequence(seed).spawn(n_batches)
    sizes = [batch_size] * (n_batches - 1) + [trials - batch_size * (n_batches - 1)]
    return list(zip(children, sizes))


def excess_risk_monte_carlo(
    instance: ProblemInstance,
    lam: float,
    xi: Sequence[float],
    trials: int = 100_000,
    seed: int = 0,
    batch_size: int = 20_000,
) -> RiskReport:
    """Sample Gaussian label noise, run the distillation loop, average the error.

    Batches draw from child seeds spawned off ``seed`` in order, so the result
    does not depend on how batches are scheduled.
    """
    if trials < 1:
        raise InputError("trials must be >= 1")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    x, theta = instance.x_matrix, instance.theta_star
    n = instance.n_samples
    noiseless = fit_sd_recursive(x, x.T @ theta, lam, xi).theta_hat
    bias = float(np.sum((x.T @ (noiseless - theta)) ** 2) / n)
    total = 0.0
    total_sq = 0.0
    for child, size in _batch_seeds(seed, trials, batch_size):
        rng = np.random.default_rng(child)
        y = instance.sample_response(rng, size)
        est = fit_sd_recursive(x, y, lam, xi).theta_hat
        err = x.T @ (est - theta[:, None])
        vals = np.sum(err**2, axis=0) / n
        total += vals.sum()
        total_sq += np.sum(vals**2)
    mean = float(total / trials)
    var = max(float(total_sq) / trials - mean**2, 0.0)
    se = float(np.sqrt(var / max(trials - 1, 1)))
    return RiskReport(mean, bias, mean - bias, "monte-carlo", standard_error=se, trials=trials)


def excess_risk_monte_carlo_many(
    instance: ProblemInstance,
    lam: float,
    xibars: np.ndarray,
    trials: int = 100_000,
    seed: int = 0,
    batch_size: int = 20_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo risk at many ``xibar`` points sharing the same noise draws.

    Each draw builds the ladder ``P^i theta_ridge`` (``P = Omega^{-1} X X^T``)
    by repeated ridge refits on teacher predictions, then combines it with
    every ``xibar``. Returns ``(means, standard_errors)``.
    """
    xibars = np.atleast_2d(np.asarray(xibars, dtype=float))
    npts, k = xibars.shape
    x, theta = instance.x_matrix, instance.theta_star
    n = instance.n_samples
    # weight on ladder rung i: rung 0 gets 1 - sum(xibar)
    coef = np.concatenate([1.0 - xibars.sum(axis=1, keepdims=True), xibars], axis=1)
    sums = np.zeros(npts)
    sums_sq = np.zeros(npts)
    for child, size in _batch_seeds(seed, trials, batch_size):
        rng = np.random.default_rng(child)
        y = instance.sample_response(rng, size)
        ladder = fit_sd_recursive(x, y, lam, np.ones(0)).theta_hat
        rungs = [x.T @ ladder]
        current = ladder
        for _ in range(k):
            current = fit_sd_recursive(x, x.T @ current, lam, np.ones(0)).theta_hat
            rungs.append(x.T @ current)
        # prediction residual per rung: n x size
        target = x.T @ theta
        stack = np.stack([rg - target[:, None] for rg in rungs], axis=0)  # (k+1, n, size)
        pred = np.einsum("pk,kns->pns", coef, stack)
        vals = np.sum(pred**2, axis=1) / n  # (npts, size)
        sums += vals.sum(axis=1)
        sums_sq += np.sum(vals**2, axis=1)
    means = sums / trials
    var = np.maximum(sums_sq / trials - means**2, 0.0)
    return means, np.sqrt(var / max(trials - 1, 1))


def risk_sweep_rows(instance: ProblemInstance, lambdas: Sequence[float], k: int, xibar_fn) -> list[dict]:
    """Rows ``(lambda, k, excess_risk, bias, variance)`` for a sweep.

    ``xibar_fn(lam)`` supplies the ``xibar`` to evaluate at each penalty.
    """
    rows = []
    for lam in lambdas:
        rep = excess_risk_closed(instance, lam, xibar_fn(lam)) if k > 0 else ridge_risk(instance, lam)
        rows.append(
            {
                "lambda": float(lam),
                "k": int(k),
                "excess_risk": rep.excess_risk,
                "bias": rep.bias_part,
                "variance": rep.variance_part,
            }
        )
    return rows


def xi_risk(instance: ProblemInstance, lam: float, xi: Sequence[float]) -> RiskReport:
    """Closed-form risk for the original ``xi`` parametrization."""
    return excess_risk_closed(instance, lam, xi_to_xibar(xi))
