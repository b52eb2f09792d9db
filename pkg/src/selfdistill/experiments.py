"""Experiment drivers behind the command-line interface.

Each ``cmd_*`` takes an :class:`ExperimentConfig`, writes CSV/JSON files into
``config.out_dir`` (every file stamped with the config hash and seed) and
returns a JSON-ready summary.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.stats import linregress

from . import data as data_mod
from .errors import ConfigError, DegenerateParametrizationError, InfeasibleError
from .estimators import xibar_to_xi
from .io import config_hash, write_csv, write_json
from .risk import (
    excess_risk_monte_carlo,
    lower_bound,
    ridge_lambda_star,
    ridge_risk,
    xi_risk,
)
from .solver import best_xibar_path, build_system, default_lambda_grid, min_excess_risk
from .spectral import ProblemInstance, make_synthetic, power_law_singular_values
from .tuner import tune

KINDS = ("synth-sweep", "separation", "gap-study", "real-data", "tune", "risk-eval")
BOUND_FLAG_RTOL = 1e-6


@dataclass
class InstanceSpec:
    """Synthetic instance with prescribed singular values; ``d`` and ``n`` default to the rank."""

    singular_values: list
    theta: Union[str, list] = "u1"
    gamma: float = 0.125
    d: Optional[int] = None
    n: Optional[int] = None
    theta_norm: float = 1.0
    seed: int = 0
    identity_bases: bool = True

    def build(self) -> ProblemInstance:
        r = len(self.singular_values)
        d = self.d if self.d is not None else r
        n = self.n if self.n is not None else d
        return make_synthetic(
            d, r, self.singular_values, self.theta, self.gamma, n,
            seed=self.seed, theta_norm=self.theta_norm, identity_bases=self.identity_bases,
        )


@dataclass
class LambdaGridSpec:
    """Log grid ``10^lo_exp .. 10^hi_exp`` with ratio ``sqrt(10)``, or explicit ``values``."""

    lo_exp: float = -4.0
    hi_exp: float = 4.0
    values: Optional[list] = None

    def array(self) -> np.ndarray:
        if self.values is not None:
            grid = np.asarray(self.values, dtype=float)
            if grid.size == 0 or np.any(~np.isfinite(grid)) or np.any(grid <= 0):
                raise ConfigError("lambda grid values must be finite and positive")
            return np.sort(grid)
        if self.hi_exp < self.lo_exp:
            raise ConfigError("lambda grid hi_exp < lo_exp")
        return default_lambda_grid(self.lo_exp, self.hi_exp)


RANK4_DISTINCT = InstanceSpec(singular_values=[1.0, 1 / 2, 1 / 3, 1 / 4], theta="u1", gamma=0.125)


@dataclass
class ExperimentConfig:
    kind: str
    instance: Optional[InstanceSpec] = None
    lambda_grid: LambdaGridSpec = field(default_factory=LambdaGridSpec)
    k_list: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    seed: int = 0
    trials: int = 100_000
    out_dir: str = "results"
    require_bound: bool = False
    # separation study
    r_list: list = field(default_factory=lambda: list(range(5, 55, 5)))
    s_last_list: list = field(default_factory=lambda: [0.8, 0.5])
    family_d: int = 100
    family_gamma: float = 0.1
    # singular-gap study
    eps_list: list = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.02, 0.01])
    gap_lambda: float = 0.125
    # real data
    dataset: Optional[str] = None
    data_path: Optional[str] = None
    # risk evaluation
    xi: Optional[list] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if isinstance(self.instance, dict):
            self.instance = _build(InstanceSpec, self.instance, "instance")
        if isinstance(self.lambda_grid, dict):
            self.lambda_grid = _build(LambdaGridSpec, self.lambda_grid, "lambda_grid")
        if any(int(k) != k or k < 0 for k in self.k_list):
            raise ConfigError(f"k_list must hold non-negative integers, got {self.k_list}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        return _build(cls, payload, "config")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            payload = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(payload)

    def stamp(self) -> dict:
        # out_dir does not change results, so it stays out of the hash
        hashed = {k: v for k, v in self.to_dict().items() if k != "out_dir"}
        return {"config_hash": config_hash(hashed), "seed": self.seed, "kind": self.kind}

    def grid(self) -> np.ndarray:
        return self.lambda_grid.array()


def _build(cls, payload, where: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")
    try:
        return cls(**payload)
    except TypeError as exc:
        raise ConfigError(f"bad {where}: {exc}") from exc


def _out(config: ExperimentConfig, name: str) -> Path:
    return Path(config.out_dir) / name


def _save_config(config: ExperimentConfig) -> None:
    write_json(_out(config, "config.json"), config.to_dict(), config.stamp())


def _xi_or_none(xibar) -> Optional[list]:
    try:
        return xibar_to_xi(xibar).tolist()
    except DegenerateParametrizationError:
        return None


def _instance(config: ExperimentConfig) -> ProblemInstance:
    spec = config.instance if config.instance is not None else RANK4_DISTINCT
    try:
        return spec.build()
    except ValueError as exc:
        raise ConfigError(f"bad instance spec: {exc}") from exc


# ---------------------------------------------------------------------------


def sweep_rows(instance: ProblemInstance, grid, k_list) -> list[dict]:
    """Risk of the optimal ``k``-step estimator for each ``k`` and grid penalty.

    ``excess_risk`` is the exact minimum; ``xibar_excess_risk`` is the risk at
    the reported ``xibar``, which can trail it where ``xibar`` is ill-conditioned.
    """
    bound = lower_bound(instance)
    k_max = max(k_list)
    rows = []
    for lam in grid:
        path = best_xibar_path(instance, float(lam), k_max)
        for k in sorted(k_list):
            xibar, at_xibar = path[k]
            risk = min_excess_risk(instance, float(lam), k)
            gap = (risk - bound) / bound if bound > 0 else risk
            rows.append({
                "k": k,
                "lambda": float(lam),
                "excess_risk": risk,
                "xibar_excess_risk": at_xibar,
                "lower_bound": bound,
                "relative_gap": gap,
                "meets_bound": bool(gap <= BOUND_FLAG_RTOL),
                "xibar": xibar.xibar.tolist(),
                "xi": _xi_or_none(xibar),
            })
    return rows


def cmd_synth_sweep(config: ExperimentConfig) -> dict:
    inst = _instance(config)
    grid = config.grid()
    rows = sweep_rows(inst, grid, config.k_list)
    stamp = config.stamp()
    write_csv(_out(config, "synth_sweep_curves.csv"), rows, stamp)
    per_k = {}
    for k in sorted(config.k_list):
        sub = [r for r in rows if r["k"] == k]
        best = min(sub, key=lambda r: r["excess_risk"])
        per_k[str(k)] = {
            "min_excess_risk": best["excess_risk"],
            "argmin_lambda": best["lambda"],
            "meets_bound_everywhere": all(r["meets_bound"] for r in sub),
            "meets_bound_anywhere": any(r["meets_bound"] for r in sub),
        }
    summary = {
        "lower_bound": lower_bound(inst),
        "rank": inst.rank,
        "ridge_lambda_star": ridge_lambda_star(inst),
        "per_k": per_k,
    }
    write_json(_out(config, "synth_sweep_summary.json"), summary, stamp)
    _save_config(config)
    r_key = str(inst.rank)
    if config.require_bound and not (r_key in per_k and per_k[r_key]["meets_bound_anywhere"]):
        raise InfeasibleError(f"the {inst.rank}-step curve never reaches the lower bound")
    return summary


def separation_rows(r_list, s_last_list, d: int, gamma: float, grid, seed: int = 0) -> list[dict]:
    """Ridge-to-SD risk ratio ``A/B`` along the power-law family with ``theta* = u_1``."""
    rows = []
    for s_last in s_last_list:
        for r in r_list:
            inst = make_synthetic(d, r, power_law_singular_values(r, 1.0, s_last), "u1", gamma, d, seed=seed, identity_bases=True)
            lam_ridge = ridge_lambda_star(inst)
            a = ridge_risk(inst, lam_ridge).excess_risk
            best_lam, best = None, np.inf
            for lam in grid:
                risk = min_excess_risk(inst, float(lam), r)
                if risk < best:
                    best_lam, best = float(lam), risk
            bound = lower_bound(inst)
            rows.append({
                "s_last": float(s_last),
                "r": int(r),
                "ridge_min": a,
                "ridge_lambda": lam_ridge,
                "sd_min": best,
                "sd_lambda": best_lam,
                "lower_bound": bound,
                "ratio": a / best,
                "ratio_bound": a / bound,
            })
    return rows


def line_fit(xs, ys) -> dict:
    fit = linregress(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "r_squared": float(fit.rvalue**2)}


def cmd_separation_ratio(config: ExperimentConfig) -> dict:
    rows = separation_rows(config.r_list, config.s_last_list, config.family_d, config.family_gamma, config.grid(), config.seed)
    stamp = config.stamp()
    write_csv(_out(config, "separation_ratio.csv"), rows, stamp)
    fits = {}
    for s_last in config.s_last_list:
        sub = [r for r in rows if r["s_last"] == float(s_last)]
        if len(sub) >= 2:
            fits[repr(float(s_last))] = line_fit([r["r"] for r in sub], [r["ratio"] for r in sub])
    summary = {"fits": fits, "rows": rows}
    write_json(_out(config, "separation_summary.json"), summary, stamp)
    _save_config(config)
    return summary


def gap_rows(eps_list, k_list, lam: float, rank: int = 4, gamma: float = 0.125) -> list[dict]:
    """Optimal ``xi`` magnitudes for ``s_j = 1 - (j-1) eps`` at a fixed penalty."""
    rows = []
    for eps in eps_list:
        s = 1.0 - np.arange(rank) * float(eps)
        if np.any(s <= 0):
            raise ConfigError(f"eps={eps} makes a singular value non-positive")
        inst = make_synthetic(rank, rank, s, "u1", gamma, rank, identity_bases=True)
        system = build_system(inst, lam, rank)
        path = best_xibar_path(inst, lam, max(k_list))
        for k in sorted(k_list):
            if k == 0:
                continue
            xibar, _ = path[k]
            risk = min_excess_risk(inst, lam, k)
            xi = _xi_or_none(xibar)
            rows.append({
                "eps": float(eps),
                "k": int(k),
                "lambda": float(lam),
                "xi": xi,
                "xibar": xibar.xibar.tolist(),
                "max_abs_xi": None if xi is None else float(np.max(np.abs(xi))),
                "abs_xi_last": None if xi is None else float(abs(xi[-1])),
                "excess_risk": risk,
                "condition_number": system.condition_number,
                "status": "ok" if xi is not None else "xi not identifiable",
            })
    return rows


def cmd_gap_study(config: ExperimentConfig) -> dict:
    rows = gap_rows(config.eps_list, config.k_list, config.gap_lambda)
    stamp = config.stamp()
    write_csv(_out(config, "gap_study.csv"), rows, stamp)
    summary = {"rows": rows}
    write_json(_out(config, "gap_study_summary.json"), summary, stamp)
    _save_config(config)
    return summary


def _dataset(config: ExperimentConfig):
    if config.dataset not in data_mod.PRESETS:
        raise ConfigError(f"dataset must be one of {sorted(data_mod.PRESETS)}, got {config.dataset!r}")
    if not config.data_path:
        raise ConfigError("data_path is required")
    spec = data_mod.PRESETS[config.dataset]
    path = Path(config.data_path)
    if path.is_dir():
        path = path / spec.filename
    return spec, data_mod.prepare(spec, path)


def real_data_report(ds, grid, k_list=(0, 1, 2)) -> tuple[list, list, list]:
    """Tune each ``k`` on train/validation and score on test."""
    rows, curves, traces = [], [], []
    for k in k_list:
        res = tune(ds.train, ds.validation, grid, k)
        rows.append({
            "estimator": "ridge" if k == 0 else f"{k}-step SD",
            "k": k,
            "lambda": res.lam,
            "xi": None if res.xi is None else res.xi.tolist(),
            "xibar": res.xibar.tolist(),
            "validation_mse": res.validation_mse,
            "test_mse": data_mod.mse(res.weights, ds.test),
            "note": res.note,
        })
        curves += res.curve
        traces += res.trace
    return rows, curves, traces


def cmd_real_data(config: ExperimentConfig) -> dict:
    spec, ds = _dataset(config)
    ks = [k for k in config.k_list if k <= 2] if config.k_list else [0, 1, 2]
    rows, curves, traces = real_data_report(ds, config.grid(), ks)
    stamp = config.stamp()
    write_csv(_out(config, f"{spec.name}_validation_curves.csv"), curves, stamp)
    write_csv(_out(config, f"{spec.name}_tuning_trace.csv"), traces, stamp)
    data_mod.write_manifest(ds, _out(config, f"{spec.name}_manifest.json"))
    summary = {"dataset": spec.name, "rows": rows, "provenance": ds.provenance}
    write_json(_out(config, f"{spec.name}_table.json"), summary, stamp)
    _save_config(config)
    return summary


def cmd_tune(config: ExperimentConfig) -> dict:
    spec, ds = _dataset(config)
    k = max(config.k_list) if config.k_list else 1
    res = tune(ds.train, ds.validation, config.grid(), k)
    stamp = config.stamp()
    summary = {"dataset": spec.name, **res.to_dict(), "test_mse": data_mod.mse(res.weights, ds.test)}
    write_csv(_out(config, f"{spec.name}_k{k}_trace.csv"), res.trace, stamp)
    write_json(_out(config, f"{spec.name}_k{k}_tuned.json"), summary, stamp)
    _save_config(config)
    return summary


def cmd_risk_eval(config: ExperimentConfig) -> dict:
    """Closed-form and Monte-Carlo risk of a fixed ``xi`` along the grid."""
    inst = _instance(config)
    xi = np.asarray(config.xi if config.xi is not None else [], dtype=float)
    rows = []
    for i, lam in enumerate(config.grid()):
        closed = xi_risk(inst, float(lam), xi)
        mc = excess_risk_monte_carlo(inst, float(lam), xi, trials=config.trials, seed=config.seed + i)
        rows.append({
            "lambda": float(lam),
            "closed_form": closed.excess_risk,
            "monte_carlo": mc.excess_risk,
            "standard_error": mc.standard_error,
            "z_score": (mc.excess_risk - closed.excess_risk) / mc.standard_error if mc.standard_error > 0 else 0.0,
            "trials": config.trials,
        })
    stamp = config.stamp()
    write_csv(_out(config, "risk_eval.csv"), rows, stamp)
    summary = {"xi": xi.tolist(), "rows": rows}
    write_json(_out(config, "risk_eval_summary.json"), summary, stamp)
    _save_config(config)
    return summary


COMMANDS = {
    "synth-sweep": cmd_synth_sweep,
    "separation": cmd_separation_ratio,
    "gap-study": cmd_gap_study,
    "real-data": cmd_real_data,
    "tune": cmd_tune,
    "risk-eval": cmd_risk_eval,
}


def run(config: ExperimentConfig) -> dict:
    return COMMANDS[config.kind](config)
