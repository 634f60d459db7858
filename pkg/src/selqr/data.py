"""Observation container and CSV interchange.

A sample is (D, Y, W, X) per row: a binary selection indicator, an outcome
that is only meaningful where D = 1, one or more instrument columns W and
zero or more covariate columns X. Unobserved outcomes are stored as NaN and
written to CSV as empty fields.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class ObservationSet:
    """Immutable (D, Y, W, X) sample.

    d : (n,) int array with values in {0, 1}
    y : (n,) float array, NaN exactly where d == 0 is allowed
    w : (n, d_w) instrument columns, d_w >= 1
    x : (n, d_x) covariate columns, d_x >= 0
    """

    d: np.ndarray
    y: np.ndarray
    w: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        # copy before freezing so caller-owned arrays stay writable
        d = np.array(self.d, dtype=int)
        y = np.array(self.y, dtype=float)
        w = np.atleast_2d(np.array(self.w, dtype=float))
        x = np.array(self.x, dtype=float).reshape(len(d), -1)
        if w.shape[0] != len(d):
            w = w.T
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x", x)
        if not np.isin(d, (0, 1)).all():
            raise InputError("selection indicator must be binary 0/1")
        if y.shape != d.shape or w.shape[0] != len(d) or x.shape[0] != len(d):
            raise InputError("d, y, w, x must share the row count")
        if w.shape[1] < 1:
            raise InputError("at least one instrument column is required")
        if not np.isfinite(y[d == 1]).all():
            raise InputError("outcome missing on a selected (d=1) row")
        if not (np.isfinite(w).all() and np.isfinite(x).all()):
            raise InputError("w and x must be fully observed")
        for a in (d, y, w, x):
            a.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.d)

    @property
    def selected(self) -> np.ndarray:
        return self.d == 1

    @property
    def n_selected(self) -> int:
        return int(self.d.sum())

    def y_filled(self, fill: float = 0.0) -> np.ndarray:
        """Outcome with unselected rows replaced by `fill` (Y = D*Y convention)."""
        return np.where(self.selected, self.y, fill)

    def design_z(self) -> np.ndarray:
        """Quantile-regression design Z = (1, X, W) per row."""
        return np.column_stack([np.ones(self.n), self.x, self.w])

    @property
    def d_z(self) -> int:
        return 1 + self.x.shape[1] + self.w.shape[1]

    def z_labels(self) -> list[str]:
        labels = ["intercept"]
        labels += [f"x{i}" for i in range(self.x.shape[1])]
        labels += [f"w{i}" for i in range(self.w.shape[1])]
        return labels


@dataclass(frozen=True)
class ColumnMap:
    """Names of the CSV columns holding d, y, the instruments and covariates."""

    d_column: str
    y_column: str
    w_columns: tuple[str, ...]
    x_columns: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "w_columns", tuple(self.w_columns))
        object.__setattr__(self, "x_columns", tuple(self.x_columns))
        cols = [self.d_column, self.y_column, *self.w_columns, *self.x_columns]
        if len(set(cols)) != len(cols):
            raise InputError("column map assigns one CSV column to two roles")
        if not self.w_columns:
            raise InputError("column map needs at least one instrument column")


def _parse_cell(raw: str, col: str, line: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise InputError(f"column '{col}' not parseable as a number at line {line}") from None


def ingest_csv(path, colmap: ColumnMap) -> ObservationSet:
    """Read a headered CSV into an ObservationSet.

    d must be 0/1; the y field may be empty only where d = 0; every w and x
    field must be present on every row. Errors name the offending line
    (header = line 1).
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty file, header row required")
        needed = {colmap.d_column, colmap.y_column, *colmap.w_columns, *colmap.x_columns}
        missing = needed - set(reader.fieldnames)
        if missing:
            raise InputError(f"{path}: missing column(s) {sorted(missing)}")
        d, y, w, x = [], [], [], []
        for line, row in enumerate(reader, start=2):
            draw = (row[colmap.d_column] or "").strip()
            if draw not in ("0", "1"):
                raise InputError(f"non-binary selection indicator {draw!r} at line {line}")
            di = int(draw)
            yraw = (row[colmap.y_column] or "").strip()
            if di == 1 and yraw == "":
                raise InputError(f"observed row missing outcome at line {line}")
            d.append(di)
            y.append(_parse_cell(yraw, colmap.y_column, line) if yraw else np.nan)
            w.append([_parse_cell(row[c], c, line) for c in colmap.w_columns])
            x.append([_parse_cell(row[c], c, line) for c in colmap.x_columns])
    if not d:
        raise InputError(f"{path}: no data rows")
    return ObservationSet(
        d=np.array(d), y=np.array(y), w=np.array(w),
        x=np.array(x, dtype=float).reshape(len(d), -1),
    )


def write_csv(path, data: ObservationSet, colmap: ColumnMap | None = None) -> ColumnMap:
    """Write an ObservationSet to CSV; round-trips exactly through ingest_csv."""
    if colmap is None:
        colmap = ColumnMap(
            d_column="d", y_column="y",
            w_columns=tuple(f"w{i}" for i in range(data.w.shape[1])),
            x_columns=tuple(f"x{i}" for i in range(data.x.shape[1])),
        )
    header = [colmap.d_column, colmap.y_column, *colmap.w_columns, *colmap.x_columns]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            yi = "" if np.isnan(data.y[i]) else repr(float(data.y[i]))
            row = [str(int(data.d[i])), yi]
            row += [repr(float(v)) for v in data.w[i]]
            row += [repr(float(v)) for v in data.x[i]]
            writer.writerow(row)
    return colmap
