"""Sample storage, public bounds and CSV ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BoundViolation,
    DatasetError,
    MissingColumn,
    NonFiniteValue,
    ParseFailure,
    TooFewRows,
)


@dataclass(frozen=True)
class Dataset:
    """Raw samples ``(x_i, y_i, z_i)``; ``z`` is stored as an ``(n, d)`` matrix."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(-1, 1)
        if z.ndim != 2:
            raise DatasetError("z must be a matrix")
        n = x.shape[0]
        if y.shape[0] != n or z.shape[0] != n:
            raise DatasetError(
                f"row counts differ: x={n}, y={y.shape[0]}, z={z.shape[0]}"
            )
        if n < 2:
            raise TooFewRows(n)
        for arr in (x, y, z):
            if not np.all(np.isfinite(arr)):
                raise DatasetError("dataset contains non-finite values")
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.z.shape[1]


@dataclass(frozen=True)
class BoundedDataset:
    """A dataset whose x and y columns have been divided by public bounds.

    ``clipped`` counts the entries that had to be clamped to [-1, 1].
    """

    data: Dataset
    bound_x: float
    bound_y: float
    clipped: int = field(default=0)

    def __post_init__(self):
        if not (self.bound_x > 0 and self.bound_y > 0):
            raise DatasetError("bounds must be positive")
        if np.any(np.abs(self.data.x) > 1.0) or np.any(np.abs(self.data.y) > 1.0):
            raise DatasetError("rescaled values must lie in [-1, 1]")

    @property
    def x(self) -> np.ndarray:
        return self.data.x

    @property
    def y(self) -> np.ndarray:
        return self.data.y

    @property
    def z(self) -> np.ndarray:
        return self.data.z

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def d(self) -> int:
        return self.data.d


def load_csv(path: str | Path, d: int) -> Dataset:
    """Read a ``x,y,z1,...,zd`` CSV file into a :class:`Dataset`.

    Row and column numbers in errors are 1-based data rows and 0-based columns.
    """
    expected = ["x", "y"] + [f"z{j}" for j in range(1, d + 1)]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumn("x") from None
        for name in expected:
            if name not in header:
                raise MissingColumn(name)
        idx = [header.index(name) for name in expected]
        rows = []
        for r, raw in enumerate(reader, start=1):
            if not raw or all(not cell.strip() for cell in raw):
                continue
            vals = []
            for c, j in enumerate(idx):
                if j >= len(raw):
                    raise ParseFailure(r, c, "")
                text = raw[j].strip()
                try:
                    v = float(text)
                except ValueError:
                    raise ParseFailure(r, c, text) from None
                if not math.isfinite(v):
                    raise NonFiniteValue(r, c)
                vals.append(v)
            rows.append(vals)
    if len(rows) < 2:
        raise TooFewRows(len(rows))
    arr = np.array(rows, dtype=float)
    return Dataset(x=arr[:, 0], y=arr[:, 1], z=arr[:, 2:])


def rescale(ds: Dataset, a: float, b: float, clip: bool = True) -> BoundedDataset:
    """Divide x by ``a`` and y by ``b``.

    With ``clip=False`` any sample outside its bound raises
    :class:`BoundViolation`; with ``clip=True`` it is clamped to [-1, 1].
    """
    if not (a > 0 and b > 0):
        raise DatasetError("bounds must be positive")
    x = ds.x / a
    y = ds.y / b
    if not clip:
        for arr, raw, bound in ((x, ds.x, a), (y, ds.y, b)):
            bad = np.flatnonzero(np.abs(raw) > bound)
            if bad.size:
                i = int(bad[0])
                raise BoundViolation(i, float(raw[i]), bound)
        # division can round a boundary value just past 1
        x = np.clip(x, -1.0, 1.0)
        y = np.clip(y, -1.0, 1.0)
        clipped = 0
    else:
        clipped = int(np.count_nonzero(np.abs(x) > 1.0) + np.count_nonzero(np.abs(y) > 1.0))
        x = np.clip(x, -1.0, 1.0)
        y = np.clip(y, -1.0, 1.0)
    return BoundedDataset(Dataset(x, y, ds.z), float(a), float(b), clipped)


def infer_bound(n: float, c: float) -> float:
    """Concentration bound ``sqrt(c * ln n)`` for Gaussian-tailed columns."""
    if c <= 0:
        raise ValueError("c must be positive")
    if n <= 1:
        raise ValueError("n must exceed 1")
    return math.sqrt(c * math.log(n))
