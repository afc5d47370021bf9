"""Observation container, validation, and CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DegenerateArmError,
    DimensionError,
    ParseError,
    SampleTooSmallError,
    SchemaError,
)

#: Canonical truth-block column names written and auto-detected by CSV IO.
TRUTH_COLUMNS = ("y0", "y1", "s0", "s1")

#: Minimum sample size accepted by the estimation entry points.
MIN_ESTIMATION_N = 20


@dataclass(frozen=True)
class TruthBlock:
    """Per-record potential outcomes carried alongside simulated data."""

    y0: np.ndarray
    y1: np.ndarray
    s0: np.ndarray
    s1: np.ndarray

    def __post_init__(self):
        n = self.y0.shape[0]
        for name in ("y0", "y1", "s0", "s1"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise DimensionError(f"truth column {name} has shape {arr.shape}, expected ({n},)")
            if not np.all(np.isfinite(arr)):
                raise ParseError(f"truth column {name} contains non-finite values")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class Dataset:
    """Immutable sample of (Y, S, A, X) records.

    Attributes:
        y: primary outcome, shape (n,).
        s: surrogate marker, shape (n,).
        a: treatment indicator in {0, 1}, shape (n,).
        x: baseline covariates, shape (n, p).
        colnames: names of the covariate columns, length p.
        truth: optional potential-outcome block for simulated data.
    """

    y: np.ndarray
    s: np.ndarray
    a: np.ndarray
    x: np.ndarray
    colnames: Tuple[str, ...]
    truth: Optional[TruthBlock] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        s = np.asarray(self.s, dtype=float)
        a = np.asarray(self.a)
        x = np.asarray(self.x, dtype=float)
        n = y.shape[0]
        if y.ndim != 1 or s.shape != (n,) or a.shape != (n,):
            raise DimensionError("y, s, a must be aligned 1-d arrays")
        if x.ndim != 2 or x.shape[0] != n:
            raise DimensionError(f"x must be (n, p), got {x.shape}")
        if n == 0:
            raise SampleTooSmallError("dataset is empty")
        for name, arr in (("y", y), ("s", s), ("x", x)):
            if not np.all(np.isfinite(arr)):
                raise ParseError(f"column {name} contains non-finite values")
        if not np.all(np.isin(a, (0, 1))):
            raise ParseError("treatment column must be coded 0/1")
        a = a.astype(np.int8)
        n1 = int(a.sum())
        if n1 == 0 or n1 == n:
            raise DegenerateArmError(f"one treatment arm is empty (n1={n1}, n={n})")
        colnames = tuple(self.colnames)
        if len(colnames) != x.shape[1]:
            raise SchemaError(
                f"{len(colnames)} covariate names for {x.shape[1]} covariate columns"
            )
        for arr in (y, s, a, x):
            arr.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "colnames", colnames)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def arm_mask(self, arm: int) -> np.ndarray:
        return self.a == arm

    def column(self, name: str) -> np.ndarray:
        """Covariate column by name."""
        try:
            j = self.colnames.index(name)
        except ValueError:
            raise SchemaError(f"unknown covariate column {name!r}; have {self.colnames}")
        return self.x[:, j]

    def require_estimation_size(self) -> None:
        if self.n < MIN_ESTIMATION_N:
            raise SampleTooSmallError(
                f"estimation needs at least {MIN_ESTIMATION_N} records, got {self.n}"
            )


def arm_sizes(data: Dataset) -> Tuple[int, int]:
    """Record counts (n0, n1) per treatment arm."""
    n1 = int(data.a.sum())
    return data.n - n1, n1


def _parse_cell(text: str, column: str, row: int) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"row {row}: cannot parse {column}={text!r} as a number")
    if not np.isfinite(value):
        raise ParseError(f"row {row}: non-finite value in column {column}")
    return value


def load_csv(path: str, schema: Dict[str, object]) -> Dataset:
    """Read a Dataset from a CSV file.

    Args:
        path: file to read.
        schema: role-to-column mapping with keys ``y``, ``s``, ``a`` (column
            names) and ``x`` (list of covariate column names). Optional keys
            ``y0``/``y1``/``s0``/``s1`` map truth columns; when absent, truth
            columns are picked up automatically if the file has all four
            canonical names.

    Returns:
        Validated Dataset with rows in file order.
    """
    for role in ("y", "s", "a", "x"):
        if role not in schema:
            raise SchemaError(f"schema is missing required role {role!r}")
    xcols: Sequence[str] = list(schema["x"])
    if len(xcols) == 0:
        raise SchemaError("schema role 'x' must list at least one covariate column")

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file")
        header = [h.strip() for h in header]
        pos = {name: i for i, name in enumerate(header)}

        wanted = [str(schema["y"]), str(schema["s"]), str(schema["a"]), *map(str, xcols)]
        truth_map = {}
        for role in TRUTH_COLUMNS:
            name = schema.get(role)
            if name is not None:
                truth_map[role] = str(name)
        if not truth_map and all(c in pos for c in TRUTH_COLUMNS):
            truth_map = {c: c for c in TRUTH_COLUMNS}
        for name in list(wanted) + list(truth_map.values()):
            if name not in pos:
                raise SchemaError(f"{path}: missing column {name!r} (header: {header})")

        rows_y, rows_s, rows_a = [], [], []
        rows_x: List[List[float]] = []
        rows_truth: Dict[str, List[float]] = {r: [] for r in truth_map}
        for i, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise ParseError(f"row {i}: expected {len(header)} cells, got {len(row)}")
            rows_y.append(_parse_cell(row[pos[str(schema['y'])]], str(schema["y"]), i))
            rows_s.append(_parse_cell(row[pos[str(schema['s'])]], str(schema["s"]), i))
            a_raw = row[pos[str(schema["a"])]].strip()
            a_val = _parse_cell(a_raw, str(schema["a"]), i)
            if a_val not in (0.0, 1.0):
                raise ParseError(f"row {i}: treatment must be 0 or 1, got {a_raw!r}")
            rows_a.append(int(a_val))
            rows_x.append([_parse_cell(row[pos[c]], c, i) for c in map(str, xcols)])
            for role, name in truth_map.items():
                rows_truth[role].append(_parse_cell(row[pos[name]], name, i))

    if not rows_y:
        raise SampleTooSmallError(f"{path}: no data rows")
    truth = None
    if truth_map:
        truth = TruthBlock(
            y0=np.array(rows_truth["y0"]),
            y1=np.array(rows_truth["y1"]),
            s0=np.array(rows_truth["s0"]),
            s1=np.array(rows_truth["s1"]),
        )
    return Dataset(
        y=np.array(rows_y),
        s=np.array(rows_s),
        a=np.array(rows_a),
        x=np.array(rows_x),
        colnames=tuple(map(str, xcols)),
        truth=truth,
    )


def write_csv(data: Dataset, path: str) -> None:
    """Write a Dataset to CSV; inverse of load_csv up to float round-trip."""
    header = ["y", "s", "a", *data.colnames]
    if data.truth is not None:
        header += list(TRUTH_COLUMNS)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            row = [repr(float(data.y[i])), repr(float(data.s[i])), str(int(data.a[i]))]
            row += [repr(float(v)) for v in data.x[i]]
            if data.truth is not None:
                row += [repr(float(getattr(data.truth, c)[i])) for c in TRUTH_COLUMNS]
            writer.writerow(row)
