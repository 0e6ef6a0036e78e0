"""CSV and JSON reading/writing with full float precision."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .timeseries import TimeSeriesMatrix


class DataError(ValueError):
    """Input data is missing or ill-formed."""


def fmt(value) -> str:
    """Shortest-safe text for one cell: floats keep 17 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, np.datetime64):
        return str(value.astype("datetime64[D]"))
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.datetime64):
        return fmt(obj)
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file, expected a header row")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i} has {len(r)} fields, header has {len(header)}")
    return header, body


def _float(path, text: str, row: int, col: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise DataError(f"{path}: row {row}, column {col!r}: not a number: {text!r}") from None
    if not math.isfinite(x):
        raise DataError(f"{path}: row {row}, column {col!r}: non-finite value {text!r}")
    return x


def read_matrix(path, *, min_columns: int = 1) -> tuple[list[str], np.ndarray]:
    """Numeric CSV with a header row; returns ``(header, rows x columns)``."""
    header, body = _read_rows(path)
    if len(header) < min_columns:
        raise DataError(f"{path}: expected at least {min_columns} columns, got {len(header)}")
    data = np.array(
        [[_float(path, c, i, header[j]) for j, c in enumerate(r)] for i, r in enumerate(body, start=2)],
        dtype=float,
    ).reshape(len(body), len(header))
    return header, data


def read_timeseries(path) -> TimeSeriesMatrix:
    """Date column (ISO-8601) followed by one column per asset."""
    header, body = _read_rows(path)
    if len(header) < 2:
        raise DataError(f"{path}: need a date column and at least one asset column")
    dates = []
    for i, r in enumerate(body, start=2):
        try:
            dates.append(np.datetime64(r[0].strip(), "D"))
        except ValueError:
            raise DataError(f"{path}: row {i}, column {header[0]!r}: bad date {r[0]!r}") from None
    values = np.array(
        [[_float(path, c, i, header[j + 1]) for j, c in enumerate(r[1:])]
         for i, r in enumerate(body, start=2)],
        dtype=float,
    ).reshape(len(body), len(header) - 1)
    ts = np.array(dates, dtype="datetime64[D]")
    if ts.size > 1 and not np.all(ts[1:] > ts[:-1]):
        bad = int(np.flatnonzero(ts[1:] <= ts[:-1])[0]) + 3
        raise DataError(f"{path}: row {bad}: dates must be strictly increasing")
    if ts.size < 2:
        raise DataError(f"{path}: need at least two observations")
    return TimeSeriesMatrix(values.T, ts, tuple(header[1:]))


def write_timeseries(path, X: TimeSeriesMatrix) -> Path:
    rows = ([t] + list(col) for t, col in zip(X.timestamps, X.values.T))
    return write_csv(path, ["date", *X.names], rows)
