"""Dataset container and CSV ingestion/emission.

Responses may be missing: ``delta[i] = 0`` marks row ``i`` as unobserved and
its ``y[i]`` is stored as NaN (written as the token ``NA`` on disk).
Covariate columns are named ``x1..xd``, the response column ``y`` and the
optional indicator column ``delta``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError

NA_TOKEN = "NA"


@dataclass(frozen=True)
class Dataset:
    """Immutable (X, Y, delta) sample of size n in dimension d."""

    x: np.ndarray
    y: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        delta = np.asarray(self.delta).ravel().astype(np.int64)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", delta)
        if x.ndim != 2 or x.shape[1] < 1:
            raise DataFormatError("covariate matrix must be n x d with d >= 1")
        n = x.shape[0]
        if y.shape[0] != n or delta.shape[0] != n:
            raise DataFormatError("x, y and delta must have the same length")
        if not np.all(np.isfinite(x)):
            raise DataFormatError("covariates must be finite")
        if not np.all((delta == 0) | (delta == 1)):
            raise DataFormatError("delta entries must be 0 or 1")
        observed = delta == 1
        if not np.all(np.isfinite(y[observed])):
            raise DataFormatError("observed responses (delta=1) must be finite")
        x.setflags(write=False)
        y.setflags(write=False)
        delta.setflags(write=False)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def n_observed(self) -> int:
        return int(self.delta.sum())

    def observed(self) -> "Dataset":
        """Sub-dataset of the rows with delta = 1."""
        keep = self.delta == 1
        return Dataset(self.x[keep], self.y[keep], self.delta[keep])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.y[idx], self.delta[idx])


@dataclass(frozen=True)
class EvaluationGrid:
    """Ordered evaluation abscissae for one additive component (1-based alpha)."""

    component: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        object.__setattr__(self, "points", pts)
        if self.component < 1:
            raise DataFormatError("grid component index must be >= 1")
        if pts.size < 1 or not np.all(np.isfinite(pts)):
            raise DataFormatError("grid points must be finite and nonempty")
        if pts.size > 1 and not np.all(np.diff(pts) > 0):
            raise DataFormatError("grid points must be strictly increasing")
        pts.setflags(write=False)


def _expected_header(d: int, has_delta: bool) -> list[str]:
    cols = [f"x{j}" for j in range(1, d + 1)] + ["y"]
    if has_delta:
        cols.append("delta")
    return cols


def read_csv(path, has_delta: bool = False) -> Dataset:
    """Read a dataset written in the package's CSV interchange format.

    When ``has_delta`` is false the file must not contain a delta column and
    every response must be numeric; the returned delta vector is all ones.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if has_delta:
            if header[-1] != "delta" or header[-2] != "y" or len(header) < 3:
                raise DataFormatError(f"{path}: expected header x1..xd,y,delta")
            d = len(header) - 2
        else:
            if header[-1] != "y" or len(header) < 2:
                raise DataFormatError(f"{path}: expected header x1..xd,y")
            d = len(header) - 1
        if header != _expected_header(d, has_delta):
            raise DataFormatError(f"{path}: unexpected column names {header}")

        xs, ys, deltas = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                xrow = [float(v) for v in row[:d]]
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-numeric covariate") from None
            ytok = row[d].strip()
            if has_delta:
                try:
                    drow = int(row[d + 1])
                except ValueError:
                    raise DataFormatError(f"{path}:{lineno}: non-integer delta") from None
                if drow not in (0, 1):
                    raise DataFormatError(f"{path}:{lineno}: delta must be 0 or 1")
            else:
                drow = 1
            if ytok == NA_TOKEN:
                if not has_delta:
                    raise DataFormatError(
                        f"{path}:{lineno}: NA response requires a delta column"
                    )
                if drow == 1:
                    raise DataFormatError(f"{path}:{lineno}: NA response with delta=1")
                yval = math.nan
            else:
                try:
                    yval = float(ytok)
                except ValueError:
                    raise DataFormatError(f"{path}:{lineno}: non-numeric response") from None
            xs.append(xrow)
            ys.append(yval)
            deltas.append(drow)

    n = len(xs)
    x = np.asarray(xs, dtype=float).reshape(n, d)
    return Dataset(x, np.asarray(ys, dtype=float), np.asarray(deltas))


def write_csv(dataset: Dataset, path) -> None:
    """Write a dataset; responses round-trip exactly (repr), missing as NA."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_expected_header(dataset.d, has_delta=True))
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.x[i]]
            if dataset.delta[i] == 1:
                row.append(repr(float(dataset.y[i])))
            else:
                row.append(NA_TOKEN)
            row.append(str(int(dataset.delta[i])))
            writer.writerow(row)
