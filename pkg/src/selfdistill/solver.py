"""Optimal imitation parameters for a given penalty.

With ``a_j = s_j^2 / (lam + s_j^2)``, the k-step estimator matches the
optimal diagonal preconditioner exactly when ``A xibar = alpha`` where
``A[j, i] = 1 - a_j^i`` and ``alpha_j = 1 - (lam + s_j^2) ts*_j``. For
``k = rank`` and distinct singular values this square system is solvable for
suitable ``lam``; otherwise the risk quadratic is minimized directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import lstsq, qr, solve_triangular

from .errors import DegenerateParametrizationError
from .estimators import XiBar, _check_lambda, xibar_to_xi
from .risk import QuadraticRisk, excess_risk_closed, lower_bound, optimal_preconditioner, quadratic_coefficients
from .spectral import ProblemInstance

MAX_RELATIVE_RESIDUAL = 1e-6
MAX_CONDITION = 1e12
BOUND_RTOL = 1e-8
PINV_CUTOFF = 1e-12


def default_lambda_grid(lo_exp: float = -4.0, hi_exp: float = 4.0) -> np.ndarray:
    """Consecutive values a factor ``sqrt(10)`` apart."""
    steps = int(round((hi_exp - lo_exp) * 2)) + 1
    return 10.0 ** np.linspace(lo_exp, hi_exp, steps)


@dataclass
class AchievabilitySystem:
    a_matrix: np.ndarray
    alpha: np.ndarray
    lam: float
    condition_number: float
    a_values: np.ndarray


def build_system(instance: ProblemInstance, lam: float, k: int) -> AchievabilitySystem:
    _check_lambda(lam)
    r = instance.rank
    s = instance.spectrum.singular_values[:r]
    a = s**2 / (lam + s**2)
    powers = np.arange(1, k + 1)
    a_matrix = -np.expm1(np.outer(np.log(a), powers))
    ts = optimal_preconditioner(instance)[:r]
    alpha = 1.0 - (lam + s**2) * ts
    cond = float(np.linalg.cond(a_matrix)) if a_matrix.size else float("inf")
    return AchievabilitySystem(a_matrix, alpha, float(lam), cond, a)


@dataclass
class ExactSolveReport:
    feasible: bool
    xibar: Optional[XiBar]
    lam: float
    relative_residual: float
    condition_number: float
    risk: float
    bound: float
    reason: str = ""

    @property
    def risk_gap(self) -> float:
        """``(risk - bound) / bound``, or the absolute gap when the bound is zero."""
        if self.bound > 0:
            return (self.risk - self.bound) / self.bound
        return self.risk - self.bound

    def to_dict(self) -> dict:
        out = {
            "feasible": self.feasible,
            "lambda": self.lam,
            "xibar": None if self.xibar is None else self.xibar.xibar.tolist(),
            "relative_residual": self.relative_residual,
            "condition_number": self.condition_number,
            "risk": self.risk,
            "bound": self.bound,
            "risk_gap": self.risk_gap,
            "reason": self.reason,
        }
        if self.xibar is not None:
            try:
                out["xi"] = xibar_to_xi(self.xibar).tolist()
            except DegenerateParametrizationError:
                out["xi"] = None
        return out


def _pivoted_solve(a: np.ndarray, b: np.ndarray, refinements: int = 3) -> np.ndarray:
    """Square solve via column-pivoted QR with a few rounds of iterative refinement."""
    q, r, piv = qr(a, pivoting=True)

    def once(rhs):
        z = solve_triangular(r, q.T @ rhs)
        out = np.empty_like(z)
        out[piv] = z
        return out

    x = once(b)
    for _ in range(refinements):
        x = x + once(b - a @ x)
    return x


def min_relative_gap(s: np.ndarray) -> float:
    if s.size < 2:
        return float("inf")
    return float(np.min((s[:-1] - s[1:]) / s[:-1]))


def solve_xibar_exact(instance: ProblemInstance, lam: float, distinct_tol: float = 1e-9) -> ExactSolveReport:
    """Solve the square ``k = rank`` system; report infeasibility instead of raising."""
    bound = lower_bound(instance)
    r = instance.rank
    s = instance.spectrum.singular_values[:r]
    system = build_system(instance, lam, r)
    if r == 0:
        return ExactSolveReport(True, XiBar(np.zeros(0)), lam, 0.0, 1.0, bound, bound)

    def infeasible(reason, xibar=None, resid=float("inf")):
        risk = excess_risk_closed(instance, lam, xibar).excess_risk if xibar is not None else float("nan")
        return ExactSolveReport(False, xibar, lam, resid, system.condition_number, risk, bound, reason)

    if min_relative_gap(s) <= distinct_tol:
        return infeasible("singular values are not distinct")
    if not np.isfinite(system.condition_number) or system.condition_number > MAX_CONDITION:
        return infeasible(f"condition number {system.condition_number:.3g} exceeds {MAX_CONDITION:.0e}")
    sol = _pivoted_solve(system.a_matrix, system.alpha)
    if not np.all(np.isfinite(sol)):
        return infeasible("solve produced non-finite values")
    xibar = XiBar(sol)
    scale = np.linalg.norm(system.alpha) + np.linalg.norm(system.a_matrix, 2) * np.linalg.norm(sol)
    resid = float(np.linalg.norm(system.a_matrix @ sol - system.alpha) / max(scale, 1e-300))
    if resid > MAX_RELATIVE_RESIDUAL:
        return infeasible(f"relative residual {resid:.3g} exceeds {MAX_RELATIVE_RESIDUAL:.0e}", xibar, resid)
    risk = excess_risk_closed(instance, lam, xibar).excess_risk
    report = ExactSolveReport(True, xibar, lam, resid, system.condition_number, risk, bound)
    if report.risk_gap > BOUND_RTOL:
        report.feasible = False
        report.reason = f"risk exceeds bound by {report.risk_gap:.3g} (relative)"
    return report


def solve_xibar_argmin(quadratic: QuadraticRisk, cutoff: float = PINV_CUTOFF) -> XiBar:
    """Minimum-norm minimizer of the quadratic.

    Uses the least-squares factor when the quadratic carries one (SVD-based
    ``lstsq``); otherwise ``-M^+ m`` from an eigendecomposition truncated at
    ``cutoff`` times the largest eigenvalue.
    """
    mv = np.asarray(quadratic.m_vector, dtype=float)
    if mv.size == 0:
        return XiBar(np.zeros(0))
    if quadratic.ls_matrix is not None:
        g = np.asarray(quadratic.ls_matrix, dtype=float)
        if g.shape[0] == 0:
            return XiBar(np.zeros_like(mv))
        sol = lstsq(g, np.asarray(quadratic.ls_target, dtype=float), lapack_driver="gelsd")[0]
        return XiBar(sol)
    mm = np.asarray(quadratic.m_matrix, dtype=float)
    mm = 0.5 * (mm + mm.T)
    evals, evecs = np.linalg.eigh(mm)
    top = np.max(np.abs(evals))
    if top == 0:
        return XiBar(np.zeros_like(mv))
    keep = evals > cutoff * top
    coords = (evecs[:, keep].T @ mv) / evals[keep]
    return XiBar(-(evecs[:, keep] @ coords))


@dataclass
class SearchResult:
    success: bool
    lam: Optional[float]
    xibar: Optional[XiBar]
    best: ExactSolveReport
    reports: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "lambda": self.lam,
            "xibar": None if self.xibar is None else self.xibar.xibar.tolist(),
            "best": self.best.to_dict(),
            "grid": [rep.to_dict() for rep in self.reports],
        }


def _gap_key(rep: ExactSolveReport) -> float:
    gap = rep.risk_gap
    return gap if np.isfinite(gap) else float("inf")


def search_lambda_achieving_bound(
    instance: ProblemInstance, lambda_grid: Optional[Sequence[float]] = None, refine: int = 24
) -> SearchResult:
    """Smallest grid penalty at which the exact solve attains the lower bound.

    If no grid point succeeds, the neighbourhood of the best grid point is
    refined on a finer log grid before giving up; the returned ``best`` report
    carries the smallest risk gap seen.
    """
    grid = np.sort(np.asarray(default_lambda_grid() if lambda_grid is None else lambda_grid, dtype=float))
    reports = [solve_xibar_exact(instance, lam) for lam in grid]
    for rep in reports:
        if rep.feasible:
            return SearchResult(True, rep.lam, rep.xibar, rep, reports)
    best_i = min(range(len(reports)), key=lambda i: _gap_key(reports[i]))
    lo = grid[max(best_i - 1, 0)]
    hi = grid[min(best_i + 1, grid.size - 1)]
    if refine and hi > lo:
        for lam in np.geomspace(lo, hi, refine):
            rep = solve_xibar_exact(instance, lam)
            reports.append(rep)
            if rep.feasible:
                return SearchResult(True, rep.lam, rep.xibar, rep, reports)
    best = min(reports, key=_gap_key)
    return SearchResult(False, None, None, best, reports)


def best_xibar(instance: ProblemInstance, lam: float, k: int) -> XiBar:
    """Risk-minimizing ``xibar`` of length ``k`` at ``lam`` (quadratic argmin)."""
    return solve_xibar_argmin(quadratic_coefficients(instance, lam, k))


def _krylov_basis(diag: np.ndarray, start: np.ndarray, k: int, tol: float = 1e-13) -> np.ndarray:
    """Orthonormal basis of ``span{start, D start, .., D^(k-1) start}``, ``D = diag(diag)``.

    Arnoldi with a second Gram-Schmidt pass; stops early once the next
    direction is numerically inside the span.
    """
    scale = float(np.linalg.norm(start))
    if k == 0 or scale == 0.0:
        return np.zeros((start.size, 0))
    basis = [start / scale]
    while len(basis) < k:
        w = diag * basis[-1]
        for _ in range(2):
            q = np.column_stack(basis)
            w = w - q @ (q.T @ w)
        norm = float(np.linalg.norm(w))
        if norm <= tol:
            break
        basis.append(w / norm)
    return np.column_stack(basis)


def min_excess_risk(instance: ProblemInstance, lam: float, k: int) -> float:
    """Smallest excess risk over all ``k``-step estimators at ``lam``.

    Computed without forming ``xibar``: the reachable per-direction
    corrections span a Krylov space in ``a_j``, and the risk is the lower
    bound plus the squared distance from the ideal correction to that space.
    The space is generated with ``1 - a_j`` rather than ``a_j`` (same span,
    no cancellation when every ``a_j`` is close to 1), so this stays accurate
    where the ``xibar`` coordinates themselves are ill-conditioned.
    """
    _check_lambda(lam)
    if k == 0:
        return excess_risk_closed(instance, lam, np.zeros(0)).excess_risk
    q = quadratic_coefficients(instance, lam, 1)
    basis = _krylov_basis(q.ls_shrink, q.ls_matrix[:, 0], k)
    h = q.ls_target
    resid = h - basis @ (basis.T @ h)
    return lower_bound(instance) + float(resid @ resid)


def best_xibar_path(instance: ProblemInstance, lam: float, k_max: int) -> list[tuple[XiBar, float]]:
    """``(xibar, risk)`` for ``k = 0..k_max``, never worse than the previous step.

    Appending a zero to a ``(k-1)``-step ``xibar`` reproduces that estimator
    exactly, so when rounding makes the fresh argmin lose to it the padded
    solution is kept instead.
    """
    prev = XiBar(np.zeros(0))
    out = [(prev, excess_risk_closed(instance, lam, prev).excess_risk)]
    for k in range(1, k_max + 1):
        cand = best_xibar(instance, lam, k)
        risk = excess_risk_closed(instance, lam, cand).excess_risk
        padded = XiBar(np.append(out[-1][0].xibar, 0.0))
        if risk > out[-1][1]:
            cand, risk = padded, out[-1][1]
        out.append((cand, risk))
    return out
