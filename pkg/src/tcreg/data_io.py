"""Dataset ingestion, unit-cube scaling, and model serialization.

CSV files are plain comma-separated text with '.' decimal points and an
optional header row.  Model files are JSON documents carrying an explicit
``schema_version`` field; coefficients survive a save/load round trip
bit-for-bit because floats are serialized with shortest round-trip repr.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1


class DataError(ValueError):
    """Raised for malformed input files or invalid dataset contents."""


@dataclass(frozen=True)
class Dataset:
    """Covariate matrix plus response vector in original units.

    Parameters
    ----------
    X : ndarray
        Covariates, shape (n, d).
    y : ndarray
        Response, shape (n,).
    column_names : tuple of str, optional
        Labels for the d covariate columns.
    """

    X: np.ndarray
    y: np.ndarray
    column_names: tuple | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise DataError("X must be a 2-d array")
        if y.ndim != 1:
            raise DataError("y must be a 1-d array")
        n, d = X.shape
        if n < 1 or d < 1:
            raise DataError("dataset needs at least one row and one covariate")
        if y.shape[0] != n:
            raise DataError(f"X has {n} rows but y has {y.shape[0]}")
        if not np.all(np.isfinite(X)):
            raise DataError("X contains non-finite entries")
        if not np.all(np.isfinite(y)):
            raise DataError("y contains non-finite entries")
        if self.column_names is not None and len(self.column_names) != d:
            raise DataError("column_names length must equal number of covariates")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class UnitScaler:
    """Per-column affine map onto the unit interval.

    ``mins[j] == maxs[j]`` marks a degenerate (constant) column; such a
    column scales to 0 everywhere and is retained so indices stay stable.
    """

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=float)
        maxs = np.asarray(self.maxs, dtype=float)
        if mins.shape != maxs.shape or mins.ndim != 1:
            raise DataError("scaler min/max must be 1-d arrays of equal length")
        if np.any(maxs < mins):
            raise DataError("scaler has max < min")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    @property
    def d(self) -> int:
        return self.mins.shape[0]


def load_csv(path, response_column, header: bool = True) -> Dataset:
    """Read a CSV file into a Dataset.

    Parameters
    ----------
    path : str or Path
        File to read.
    response_column : str or int
        Column holding the response, by header name (requires ``header``)
        or 0-based position.
    header : bool
        Whether the first row is a header.

    Returns
    -------
    Dataset
        Response extracted, remaining columns as covariates in file order.

    Raises
    ------
    DataError
        On parse failures (named by row and column), a missing response
        column, or a file with no covariate columns.
    """
    parsed, names = load_matrix_csv(path, header)
    width = parsed.shape[1]

    if isinstance(response_column, str):
        if names is None:
            raise DataError("response column given by name but file has no header")
        if response_column not in names:
            raise DataError(f"{path}: response column {response_column!r} not found")
        resp_idx = names.index(response_column)
    else:
        resp_idx = int(response_column)
        if resp_idx < 0:
            resp_idx += width
        if resp_idx < 0 or resp_idx >= width:
            raise DataError(f"{path}: response column index {response_column} out of range")
    if width < 2:
        raise DataError(f"{path}: no covariates (file has a single column)")

    keep = [j for j in range(width) if j != resp_idx]
    colnames = tuple(names[j] for j in keep) if names else None
    return Dataset(X=parsed[:, keep], y=parsed[:, resp_idx], column_names=colnames)


def load_matrix_csv(path, header: bool = True):
    """Read a plain numeric CSV into (matrix, column_names).

    Same dialect and error reporting as load_csv, without extracting a
    response column.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and not all(c.strip() == "" for c in r)]
    if not rows:
        raise DataError(f"{path}: file is empty")
    names = None
    if header:
        names = tuple(c.strip() for c in rows[0])
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: no data rows below header")
    width = len(rows[0])
    parsed = np.empty((len(rows), width), dtype=float)
    for i, row in enumerate(rows):
        rownum = i + (2 if header else 1)
        if len(row) != width:
            raise DataError(f"{path}: row {rownum} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row):
            colname = names[j] if names else f"column {j}"
            text = cell.strip()
            if text == "":
                raise DataError(f"{path}: blank cell at row {rownum}, {colname}")
            try:
                value = float(text)
            except ValueError:
                raise DataError(
                    f"{path}: cannot parse {text!r} at row {rownum}, {colname}"
                ) from None
            if not math.isfinite(value):
                raise DataError(f"{path}: non-finite value at row {rownum}, {colname}")
            parsed[i, j] = value
    return parsed, names


def fit_scaler(X) -> UnitScaler:
    """Column-wise min/max of X. Constant columns get min == max."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.size == 0:
        raise DataError("fit_scaler needs a nonempty 2-d matrix")
    return UnitScaler(mins=X.min(axis=0), maxs=X.max(axis=0))


def scale_to_unit(X, scaler: UnitScaler) -> np.ndarray:
    """Map each column through (x - min)/(max - min); constant columns to 0.

    Values outside the fitted range map outside [0, 1], which is allowed
    and surfaced as an extrapolation flag at prediction time.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != scaler.d:
        raise DataError(f"matrix has {X.shape[1]} columns, scaler expects {scaler.d}")
    span = scaler.maxs - scaler.mins
    safe = np.where(span > 0, span, 1.0)
    out = (X - scaler.mins) / safe
    out[:, span == 0] = 0.0
    return out


def inverse_scale(X_unit, scaler: UnitScaler) -> np.ndarray:
    """Undo scale_to_unit. Degenerate columns map back to their constant."""
    X_unit = np.atleast_2d(np.asarray(X_unit, dtype=float))
    if X_unit.shape[1] != scaler.d:
        raise DataError(f"matrix has {X_unit.shape[1]} columns, scaler expects {scaler.d}")
    span = scaler.maxs - scaler.mins
    out = X_unit * span + scaler.mins
    out[:, span == 0] = scaler.mins[span == 0]
    return out


def _scaler_to_json(scaler: UnitScaler) -> list:
    return [
        {"min": float(lo), "max": float(hi)}
        for lo, hi in zip(scaler.mins, scaler.maxs)
    ]


def _scaler_from_json(entries) -> UnitScaler:
    return UnitScaler(
        mins=np.array([e["min"] for e in entries], dtype=float),
        maxs=np.array([e["max"] for e in entries], dtype=float),
    )


def save_model(model, path) -> None:
    """Write a fitted model (hinge-basis or axial) to a JSON file."""
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=2)
        fh.write("\n")


def load_model(path):
    """Load a model written by save_model.

    Returns
    -------
    FittedModel or AcFittedModel
        Depending on the file's ``variant`` field.

    Raises
    ------
    DataError
        On an unknown schema version or invariant violations such as a
        negative hinge weight.
    """
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataError(f"{path}: unknown schema_version {version!r}")
    # local import: estimators builds on this module
    from . import estimators

    if doc.get("variant") == "axial":
        return estimators.AcFittedModel.from_dict(doc)
    return estimators.FittedModel.from_dict(doc)
