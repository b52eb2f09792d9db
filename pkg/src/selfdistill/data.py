"""CSV ingestion, cleaning, splitting and whitening for regression datasets.

Numeric cells are parsed with Python's ``float`` after normalizing a decimal
comma to a point, so parsing is correctly rounded and independent of the
pandas parser in use. The raw file is read as strings only.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, InputError, SchemaError
from .estimators import EstimatorWeights

log = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "?"})
MIN_STD = 1e-12
DEFAULT_FRACTIONS = (0.3, 0.3, 0.4)


@dataclass(frozen=True)
class MissingPolicy:
    sentinels: tuple = ()


@dataclass
class RawTable:
    frame: pd.DataFrame  # float columns: features then target
    feature_names: list
    target_name: str
    source: str
    counts: dict


@dataclass(frozen=True)
class Split:
    features: np.ndarray  # n x d, rows are records
    target: np.ndarray

    @property
    def size(self) -> int:
        return self.target.size


@dataclass(frozen=True)
class Whitening:
    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: float
    target_std: float
    kept_features: list
    dropped_features: list

    def unwhiten_features(self, features: np.ndarray) -> np.ndarray:
        return features * self.feature_std + self.feature_mean

    def unwhiten_target(self, target: np.ndarray) -> np.ndarray:
        return target * self.target_std + self.target_mean


@dataclass(frozen=True)
class RegressionDataset:
    feature_names: list
    target_name: str
    train: Split
    validation: Split
    test: Split
    whitening: Optional[Whitening] = None
    provenance: dict = field(default_factory=dict)

    def splits(self) -> dict:
        return {"train": self.train, "validation": self.validation, "test": self.test}


def sniff_delimiter(path: Path) -> str:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        head = fh.readline()
    try:
        return csv.Sniffer().sniff(head, delimiters=";,\t").delimiter
    except csv.Error:
        counts = {d: head.count(d) for d in ";,\t"}
        best = max(counts, key=counts.get)
        if counts[best] == 0:
            raise SchemaError(f"{path}: cannot detect a delimiter in the header row")
        return best


def _parse_cell(text: str, decimal_comma: bool) -> float:
    """``nan`` for missing tokens; raises ``ValueError`` for garbage."""
    t = text.strip()
    if t.lower() in MISSING_TOKENS:
        return math.nan
    if decimal_comma:
        t = t.replace(",", ".")
    return float(t)


def _has_header(path: Path, delim: str) -> bool:
    with open(path, encoding="utf-8-sig") as fh:
        first = fh.readline().strip()
    try:
        [_parse_cell(c, delim != ",") for c in first.split(delim)]
    except ValueError:
        return True
    return False


def load_csv(
    path,
    feature_names: Sequence[str],
    target_name: str,
    missing_policy: MissingPolicy = MissingPolicy(),
    hourly_column: Optional[str] = None,
    column_names: Optional[Sequence[str]] = None,
) -> RawTable:
    """Read the named columns, drop rows with missing, sentinel or unparseable values.

    With ``hourly_column`` set, that column is parsed as a timestamp and only
    the first record of each clock hour is kept (before cleaning).
    ``column_names`` labels a file without a header row; it is ignored when
    the first row is not numeric.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    delim = sniff_delimiter(path)
    names = list(column_names) if column_names and not _has_header(path, delim) else None
    raw = pd.read_csv(
        path, sep=delim, dtype=str, keep_default_na=False, encoding="utf-8-sig",
        header=None if names else "infer", names=names,
    )
    raw.columns = [c.strip() for c in raw.columns]
    wanted = list(feature_names) + [target_name]
    extra = [hourly_column] if hourly_column else []
    absent = [c for c in wanted + extra if c not in raw.columns]
    if absent:
        raise SchemaError(f"{path}: missing columns {absent}")
    counts = {"rows_read": len(raw)}
    if hourly_column:
        stamps = pd.to_datetime(raw[hourly_column].str.strip(), errors="coerce")
        if stamps.isna().any():
            raise SchemaError(f"{path}: unparseable timestamps in {hourly_column!r}")
        first = ~stamps.dt.floor("h").duplicated(keep="first")
        raw = raw.loc[first.to_numpy()]
        counts["rows_after_hourly"] = len(raw)

    decimal_comma = delim != ","
    sentinels = {float(s) for s in missing_policy.sentinels}
    values = np.empty((len(raw), len(wanted)))
    unparseable = np.zeros(len(raw), dtype=bool)
    for col_idx, name in enumerate(wanted):
        for row_idx, cell in enumerate(raw[name].tolist()):
            try:
                values[row_idx, col_idx] = _parse_cell(cell, decimal_comma)
            except ValueError:
                values[row_idx, col_idx] = math.nan
                unparseable[row_idx] = True
    is_missing = np.isnan(values) | np.isin(values, list(sentinels))
    dropped_missing = is_missing.any(axis=1) & ~unparseable
    keep = ~(is_missing.any(axis=1) | unparseable)
    counts["rows_dropped_missing"] = int(dropped_missing.sum())
    counts["rows_dropped_unparseable"] = int(unparseable.sum())
    counts["rows_kept"] = int(keep.sum())
    if counts["rows_dropped_unparseable"]:
        log.info("%s: dropped %d rows with unparseable numbers", path, counts["rows_dropped_unparseable"])
    frame = pd.DataFrame(values[keep], columns=wanted)
    return RawTable(frame, list(feature_names), target_name, str(path), counts)


def split_sizes(total: int, fractions: Sequence[float] = DEFAULT_FRACTIONS) -> tuple[int, int, int]:
    """Floor sizes for train and validation; the remainder goes to test."""
    fr = [float(f) for f in fractions]
    if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise InputError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    n_train = int(math.floor(fr[0] * total))
    n_val = int(math.floor(fr[1] * total))
    return n_train, n_val, total - n_train - n_val


def split_sequential(
    table: RawTable,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    shuffle: bool = False,
    seed: Optional[int] = None,
) -> RegressionDataset:
    """Contiguous train/validation/test blocks in row order, or shuffled with a seed."""
    data = table.frame.to_numpy(dtype=float)
    sizes = split_sizes(len(data), fractions)
    if min(sizes) == 0:
        raise InputError(f"split sizes {sizes} leave an empty split")
    order = np.arange(len(data))
    if shuffle:
        if seed is None:
            raise InputError("shuffle mode requires a seed")
        order = np.random.default_rng(seed).permutation(len(data))
    data = data[order]
    bounds = np.cumsum((0,) + sizes)
    parts = [data[bounds[i] : bounds[i + 1]] for i in range(3)]
    splits = [Split(p[:, :-1].copy(), p[:, -1].copy()) for p in parts]
    prov = {
        "source": table.source,
        **table.counts,
        "split_mode": "shuffled" if shuffle else "sequential",
        "seed": seed,
        "fractions": list(fractions),
        "split_sizes": list(sizes),
    }
    return RegressionDataset(list(table.feature_names), table.target_name, *splits, provenance=prov)


def whiten(dataset: RegressionDataset) -> RegressionDataset:
    """Standardize features and target with train-split mean and std (``ddof=0``).

    Feature columns whose train std is below ``MIN_STD`` are dropped.
    """
    tr = dataset.train
    if tr.size == 0:
        raise InputError("train split is empty")
    mu = tr.features.mean(axis=0)
    sd = tr.features.std(axis=0)
    keep = sd >= MIN_STD
    names = list(dataset.feature_names)
    dropped = [n for n, k in zip(names, keep) if not k]
    if dropped:
        log.info("dropping constant feature columns %s", dropped)
    t_mu = float(tr.target.mean())
    t_sd = float(tr.target.std())
    if t_sd < MIN_STD:
        raise InputError("target is constant on the train split")
    wh = Whitening(mu[keep], sd[keep], t_mu, t_sd, [n for n, k in zip(names, keep) if k], dropped)

    def apply(split: Split) -> Split:
        return Split((split.features[:, keep] - wh.feature_mean) / wh.feature_std, (split.target - t_mu) / t_sd)

    prov = dict(dataset.provenance, dropped_features=dropped)
    return replace(
        dataset,
        feature_names=wh.kept_features,
        train=apply(dataset.train),
        validation=apply(dataset.validation),
        test=apply(dataset.test),
        whitening=wh,
        provenance=prov,
    )


def mse(weights, split: Split) -> float:
    theta = weights.theta_hat if isinstance(weights, EstimatorWeights) else np.asarray(weights, dtype=float)
    if split.features.shape[1] != theta.shape[0]:
        raise InputError(f"weights have length {theta.shape[0]}, split has {split.features.shape[1]} features")
    resid = split.features @ theta - split.target
    return float(resid @ resid / split.size)


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    filename: str
    feature_names: tuple
    target_name: str
    sentinels: tuple = ()
    shuffle: bool = False
    seed: Optional[int] = None
    hourly_column: Optional[str] = None
    inferred_features: bool = False
    fractions: tuple = DEFAULT_FRACTIONS
    headerless: bool = False

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "filename": self.filename,
            "feature_names": list(self.feature_names),
            "target_name": self.target_name,
            "sentinels": list(self.sentinels),
            "shuffle": self.shuffle,
            "seed": self.seed,
            "hourly_column": self.hourly_column,
            "inferred_features": self.inferred_features,
            "fractions": list(self.fractions),
            "headerless": self.headerless,
        }


AIR_QUALITY = DatasetSpec(
    name="air_quality",
    filename="AirQualityUCI.csv",
    feature_names=("PT08.S1(CO)", "PT08.S2(NMHC)", "PT08.S3(NOx)", "PT08.S4(NO2)", "PT08.S5(O3)", "T", "RH", "AH"),
    target_name="NO2(GT)",
    sentinels=(-200,),
)

AIRFOIL = DatasetSpec(
    name="airfoil",
    filename="airfoil_self_noise.dat",
    feature_names=(
        "frequency",
        "attack-angle",
        "chord-length",
        "free-stream-velocity",
        "suction-side-displacement-thickness",
    ),
    target_name="scaled-sound-pressure",
    # rows are grouped by experiment, not time, so blocks would not be exchangeable
    shuffle=True,
    seed=0,
    headerless=True,
)

_AEP_FEATURES = tuple(
    [f"T{i}" for i in range(1, 10)]
    + [f"RH_{i}" for i in range(1, 10)]
    + ["T_out", "Press_mm_hg", "RH_out", "Tdewpoint", "rv1", "rv2"]
)

AEP = DatasetSpec(
    name="aep",
    filename="energydata_complete.csv",
    feature_names=_AEP_FEATURES,
    target_name="Appliances",
    hourly_column="date",
    inferred_features=True,
)

PRESETS = {spec.name: spec for spec in (AIR_QUALITY, AIRFOIL, AEP)}


def prepare(spec: DatasetSpec, path) -> RegressionDataset:
    """Load, clean, split and whiten according to ``spec``."""
    columns = list(spec.feature_names) + [spec.target_name] if spec.headerless else None
    table = load_csv(path, spec.feature_names, spec.target_name, MissingPolicy(spec.sentinels), spec.hourly_column, columns)
    ds = split_sequential(table, spec.fractions, shuffle=spec.shuffle, seed=spec.seed)
    ds = whiten(ds)
    prov = dict(ds.provenance, dataset=spec.name, inferred_features=spec.inferred_features)
    return replace(ds, provenance=prov)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def array_sha256(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype="<f8").tobytes()).hexdigest()


def manifest(dataset: RegressionDataset) -> dict:
    """JSON-ready description with checksums of the source and every prepared split."""
    out = {
        "feature_names": dataset.feature_names,
        "target_name": dataset.target_name,
        "provenance": dataset.provenance,
        "splits": {},
    }
    src = dataset.provenance.get("source")
    if src and Path(src).is_file():
        out["source_sha256"] = file_sha256(src)
    for name, sp in dataset.splits().items():
        out["splits"][name] = {
            "rows": sp.size,
            "features_sha256": array_sha256(sp.features),
            "target_sha256": array_sha256(sp.target),
        }
    if dataset.whitening is not None:
        wh = dataset.whitening
        out["whitening"] = {
            "feature_mean": wh.feature_mean.tolist(),
            "feature_std": wh.feature_std.tolist(),
            "target_mean": wh.target_mean,
            "target_std": wh.target_std,
            "dropped_features": wh.dropped_features,
        }
    return out


def write_manifest(dataset: RegressionDataset, path) -> None:
    Path(path).write_text(json.dumps(manifest(dataset), indent=2, sort_keys=True))
