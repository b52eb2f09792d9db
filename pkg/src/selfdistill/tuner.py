"""Validation-driven choice of the penalty and the imitation parameters.

At a fixed penalty, the k-step estimator is linear in ``xibar``, so its
validation MSE is an exact convex quadratic in ``xibar``. A handful of probe
fits pins that quadratic down and its minimizer gives the tuned ``xibar``
without a k-dimensional grid search.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateParametrizationError, InputError
from .estimators import (
    EstimatorWeights,
    XiBar,
    fit_ridge,
    fit_sd_preconditioner,
    fit_sd_recursive,
    xi_to_xibar,
    xibar_preimage,
    xibar_to_xi,
)
from .risk import QuadraticRisk
from .solver import default_lambda_grid, solve_xibar_argmin

TIE_RTOL = 1e-12


def probe_count(k: int) -> int:
    return k * (k + 3) // 2 + 1


@dataclass(frozen=True)
class ProbeDesign:
    k: int
    probes: np.ndarray  # count x k, in xi coordinates
    xibars: np.ndarray  # count x k

    @property
    def count(self) -> int:
        return self.probes.shape[0]

    def design_matrix(self) -> np.ndarray:
        return quadratic_features(self.xibars)


def quadratic_features(points: np.ndarray) -> np.ndarray:
    """Monomials ``[1, x_1..x_k, x_i x_j (i <= j)]`` per row."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    k = pts.shape[1]
    pairs = list(itertools.combinations_with_replacement(range(k), 2))
    cols = [np.ones(pts.shape[0])] + [pts[:, i] for i in range(k)]
    cols += [pts[:, i] * pts[:, j] for i, j in pairs]
    return np.column_stack(cols)


_TWO_STEP_PROBES = [(0.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (1.0, -1.0), (0.5, 1.0)]


def probe_design(k: int) -> ProbeDesign:
    """Probe points: ``{0, +e_i, -e_i, (e_i + e_j)/2}`` in ``xibar`` space.

    For ``k = 1`` this is ``xi in {-1, 0, 1}`` and for ``k = 2`` it is the
    usual six-point list, kept in its conventional order.
    """
    if k < 1:
        raise InputError("probe design needs k >= 1")
    if k == 1:
        probes = np.array([[-1.0], [0.0], [1.0]])
    elif k == 2:
        probes = np.array(_TWO_STEP_PROBES)
    else:
        eye = np.eye(k)
        pts = [np.zeros(k)]
        for i in range(k):
            pts += [eye[i], -eye[i]]
        pts += [(eye[i] + eye[j]) / 2.0 for i, j in itertools.combinations(range(k), 2)]
        probes = np.array([xibar_preimage(p) for p in pts])
    xibars = np.array([xi_to_xibar(p).xibar for p in probes])
    return ProbeDesign(k=k, probes=probes, xibars=xibars)


def fit_quadratic_from_evals(evals: Sequence[tuple]) -> QuadraticRisk:
    """Fit ``x^T M x + 2 m^T x + c`` to ``(xibar, value)`` pairs.

    Interpolates when the count equals the number of monomials and uses least
    squares when there are more.
    """
    if not evals:
        raise InputError("no evaluations given")
    pts = np.array([np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in evals])
    vals = np.array([float(v) for _, v in evals])
    k = pts.shape[1]
    need = probe_count(k)
    if pts.shape[0] < need:
        raise InputError(f"need at least {need} evaluations for k={k}, got {pts.shape[0]}")
    design = quadratic_features(pts)
    coef, _, rank, _ = np.linalg.lstsq(design, vals, rcond=None)
    if rank < design.shape[1]:
        raise InputError(f"evaluation design is singular (rank {rank} < {design.shape[1]})")
    c = float(coef[0])
    m = coef[1 : k + 1] / 2.0
    mm = np.zeros((k, k))
    for (i, j), val in zip(itertools.combinations_with_replacement(range(k), 2), coef[k + 1 :]):
        if i == j:
            mm[i, i] = val
        else:
            mm[i, j] = mm[j, i] = val / 2.0
    return QuadraticRisk(m_matrix=mm, m_vector=m, c_scalar=c)


def r_squared(quadratic: QuadraticRisk, evals: Sequence[tuple]) -> float:
    vals = np.array([float(v) for _, v in evals])
    pred = np.array([quadratic(x) for x, _ in evals])
    ss_tot = float(np.sum((vals - vals.mean()) ** 2))
    ss_res = float(np.sum((vals - pred) ** 2))
    return 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot


def _xy(split):
    """Accept anything with ``features`` (n x d) and ``target``, or a pair."""
    if hasattr(split, "features"):
        feats, target = split.features, split.target
    else:
        feats, target = split
    feats = np.asarray(feats, dtype=float)
    target = np.asarray(target, dtype=float).ravel()
    if feats.ndim != 2 or feats.shape[0] == 0 or feats.shape[0] != target.size:
        raise InputError(f"bad split shapes: features {feats.shape}, target {target.shape}")
    return feats, target


def validation_mse(theta: np.ndarray, features: np.ndarray, target: np.ndarray) -> float:
    resid = features @ theta - target
    return float(resid @ resid / target.size)


@dataclass
class TunedResult:
    lam: float
    k: int
    xi: Optional[np.ndarray]
    xibar: np.ndarray
    validation_mse: float
    weights: EstimatorWeights
    quadratic: Optional[QuadraticRisk] = None
    note: str = ""
    trace: list = field(default_factory=list)
    curve: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "k": self.k,
            "xi": None if self.xi is None else self.xi.tolist(),
            "xibar": self.xibar.tolist(),
            "validation_mse": self.validation_mse,
            "quadratic": None if self.quadratic is None else self.quadratic.to_dict(),
            "note": self.note,
        }


def fit_at(train_x: np.ndarray, train_y: np.ndarray, lam: float, xibar) -> tuple[EstimatorWeights, Optional[np.ndarray], str]:
    """Fit the k-step estimator for a given ``xibar`` on row-major training data.

    Runs the literal recursion when ``xibar`` maps back to a unique ``xi``;
    otherwise falls back to the preconditioner form and says so.
    """
    v = XiBar(xibar).xibar
    if v.size == 0:
        return fit_ridge(train_x.T, train_y, lam), np.zeros(0), ""
    try:
        xi = xibar_to_xi(v)
    except DegenerateParametrizationError as exc:
        w = fit_sd_preconditioner(train_x.T, train_y, lam, v)
        return w, None, f"kept xibar: {exc}"
    return fit_sd_recursive(train_x.T, train_y, lam, xi), xi, ""


def _tune_one_lambda(tx, ty, vx, vy, lam: float, k: int, design: Optional[ProbeDesign]):
    rows = []
    if k == 0:
        w = fit_ridge(tx.T, ty, lam)
        mse = validation_mse(w.theta_hat, vx, vy)
        rows.append({"lambda": lam, "k": 0, "probe_xi": [], "validation_mse": mse})
        return TunedResult(lam, 0, np.zeros(0), np.zeros(0), mse, w), rows
    evals = []
    for xi, xb in zip(design.probes, design.xibars):
        w = fit_sd_recursive(tx.T, ty, lam, xi)
        mse = validation_mse(w.theta_hat, vx, vy)
        evals.append((xb, mse))
        rows.append({"lambda": lam, "k": k, "probe_xi": xi.tolist(), "validation_mse": mse})
    quad = fit_quadratic_from_evals(evals)
    xibar = solve_xibar_argmin(quad).xibar
    w, xi, note = fit_at(tx, ty, lam, xibar)
    mse = validation_mse(w.theta_hat, vx, vy)
    return TunedResult(lam, k, xi, xibar, mse, w, quad, note), rows


def tune(train, validation, lambda_grid: Optional[Sequence[float]] = None, k: int = 1) -> TunedResult:
    """Pick ``(lambda, xi)`` minimizing validation MSE; ``k = 0`` tunes ridge only.

    Grid points whose fit fails are skipped and recorded in the trace. Ties in
    validation MSE go to the larger penalty.
    """
    if k < 0:
        raise InputError("k must be >= 0")
    tx, ty = _xy(train)
    vx, vy = _xy(validation)
    if tx.shape[1] != vx.shape[1]:
        raise InputError("train and validation have different feature counts")
    grid = np.sort(np.asarray(default_lambda_grid() if lambda_grid is None else lambda_grid, dtype=float))
    if grid.size == 0 or np.any(grid <= 0):
        raise InputError("lambda grid must be nonempty and positive")
    design = probe_design(k) if k > 0 else None
    trace, curve, results = [], [], []
    for lam in grid:
        try:
            res, rows = _tune_one_lambda(tx, ty, vx, vy, float(lam), k, design)
        except (InputError, np.linalg.LinAlgError, ValueError) as exc:
            trace.append({"lambda": float(lam), "k": k, "probe_xi": None, "validation_mse": math.nan, "error": str(exc)})
            continue
        trace.extend(rows)
        curve.append({"lambda": float(lam), "k": k, "validation_mse": res.validation_mse, "xibar": res.xibar.tolist()})
        results.append(res)
    if not results:
        raise InputError("every grid point failed; see trace")
    best_val = min(r.validation_mse for r in results)
    winners = [r for r in results if r.validation_mse <= best_val * (1.0 + TIE_RTOL)]
    best = winners[-1]
    best.trace = trace
    best.curve = curve
    return best
