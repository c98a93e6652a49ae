"""CSV and JSON persistence for data matrices, spectra and reports."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConstraintViolation

SPECTRUM_COLUMNS = ("replicate", "index", "eigenvalue", "provenance")


class CsvFormatError(ValueError):
    """Malformed CSV input; the message names the offending row."""


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_matrix_csv(path, header: bool | None = None) -> np.ndarray:
    """Read a numeric CSV as ``rows x columns``.

    ``header=None`` skips the first row when any of its cells is not numeric.
    """
    rows = []
    width = None
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if line_no == 1 and (header or (header is None and not all(_is_number(c) for c in row))):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise CsvFormatError(f"{path}: row {line_no} has {len(row)} fields, expected {width}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise CsvFormatError(f"{path}: row {line_no} has a non-numeric field ({exc})") from None
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    out = np.array(rows)
    if not np.isfinite(out).all():
        raise CsvFormatError(f"{path}: contains NaN or infinite values")
    return out


def save_matrix_csv(path, matrix: np.ndarray, header: Iterable[str] | None = None) -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header is not None:
            w.writerow(list(header))
        for row in matrix:
            w.writerow([repr(float(v)) for v in row])


def load_data_pair(x_path, y_path, samples_in_rows: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Load two data sets as ``variables x samples`` matrices (rows are variables by default)."""
    X = load_matrix_csv(x_path)
    Y = load_matrix_csv(y_path)
    if samples_in_rows:
        X, Y = X.T, Y.T
    if X.shape[1] != Y.shape[1]:
        raise ConstraintViolation(
            f"sample counts differ: {x_path} has {X.shape[1]}, {y_path} has {Y.shape[1]}"
        )
    return X, Y


def save_data_pair(x_path, y_path, X: np.ndarray, Y: np.ndarray) -> None:
    """Inverse of :func:`load_data_pair`: one row per variable, one column per sample."""
    save_matrix_csv(x_path, X)
    save_matrix_csv(y_path, Y)


def write_spectrum_rows(path, rows: Iterable[tuple[int, int, float, str]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SPECTRUM_COLUMNS)
        for rep, idx, val, prov in rows:
            w.writerow([int(rep), int(idx), repr(float(val)), prov])


def read_spectrum_rows(path) -> list[tuple[int, int, float, str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader)
        if tuple(head) != SPECTRUM_COLUMNS:
            raise CsvFormatError(f"{path}: unexpected header {head}")
        return [(int(r), int(i), float(v), p) for r, i, v, p in reader]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed indentation, non-finite floats as strings."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text())
