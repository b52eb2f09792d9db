"""Deterministic JSON/CSV output stamped with a config hash and seed.

Floats are written with ``repr``, which round-trips exactly, so rerunning an
experiment with the same config produces byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


def to_jsonable(obj):
    """Recursively convert numpy values and ``to_dict`` objects; non-finite floats become ``None``."""
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def canonical_json(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_hash(config) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


def write_json(path, payload, stamp: Mapping | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = dict(to_jsonable(payload)) if isinstance(payload, Mapping) else {"data": to_jsonable(payload)}
    if stamp:
        body = {**to_jsonable(stamp), **body}
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return path


def _cell(value) -> str:
    v = to_jsonable(value)
    if v is None:
        return "nan"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, separators=(",", ":"))
    return str(v)


def write_csv(path, rows: Iterable[Mapping], stamp: Mapping | None = None, columns: list | None = None) -> Path:
    """CSV with ``# key: value`` stamp lines ahead of the header."""
    rows = list(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = []
        for row in rows:
            columns += [c for c in row if c not in columns]
    with open(path, "w", newline="") as fh:
        for key, val in (stamp or {}).items():
            fh.write(f"# {key}: {_cell(val)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
    return path


def read_csv_rows(path) -> list[dict]:
    """Rows of a stamped CSV as string dicts (stamp lines skipped)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))
