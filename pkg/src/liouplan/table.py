"""Uniform-grid trajectory tables and their CSV format."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DomainError, GridMismatch, MissingColumn
from .expr import Expr, compile_expr, variables

TIME = "t"


@dataclass(frozen=True)
class TrajectoryTable:
    """Named columns sampled on ``t_k = t0 + k*h`` (k = 0..n).

    ``midpoints`` holds optional columns sampled at ``t_k + h/2`` (k = 0..n-1);
    the quadrature and the input interpolation of the integrator both use
    them.
    """

    t0: float
    h: float
    n: int
    columns: Mapping[str, np.ndarray] = field(default_factory=dict)
    midpoints: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("a trajectory table needs at least one interval")
        if not self.h > 0:
            raise ConfigError("grid step must be positive")
        cols = {k: _frozen(v, self.n + 1, k) for k, v in self.columns.items()}
        mids = {k: _frozen(v, self.n, k) for k, v in self.midpoints.items()}
        if TIME in cols or TIME in mids:
            raise ConfigError("'t' is implicit and cannot be a stored column")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "midpoints", mids)

    @classmethod
    def grid(cls, t0: float, tf: float, n: int) -> "TrajectoryTable":
        if not tf > t0:
            raise ConfigError("horizon must satisfy t0 < tf")
        return cls(float(t0), (float(tf) - float(t0)) / int(n), int(n))

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n + 1)

    @property
    def t_mid(self) -> np.ndarray:
        return self.t0 + self.h * (np.arange(self.n) + 0.5)

    @property
    def tf(self) -> float:
        return float(self.t[-1])

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def __contains__(self, name):
        return name in self.columns

    def __getitem__(self, name) -> np.ndarray:
        if name == TIME:
            return self.t
        try:
            return self.columns[name]
        except KeyError:
            raise MissingColumn(name) from None

    def mid(self, name) -> np.ndarray:
        if name == TIME:
            return self.t_mid
        try:
            return self.midpoints[name]
        except KeyError:
            raise MissingColumn(f"{name} (midpoints)") from None

    def has_mid(self, name) -> bool:
        return name == TIME or name in self.midpoints

    def same_grid(self, other: "TrajectoryTable") -> bool:
        return self.n == other.n and np.array_equal(self.t, other.t)

    def with_columns(self, columns: Mapping[str, Sequence[float]],
                     midpoints: Mapping[str, Sequence[float]] | None = None) -> "TrajectoryTable":
        cols = {**self.columns, **columns}
        mids = {**self.midpoints, **(midpoints or {})}
        return TrajectoryTable(self.t0, self.h, self.n, cols, mids)

    def select(self, names: Iterable[str]) -> "TrajectoryTable":
        names = list(names)
        return TrajectoryTable(self.t0, self.h, self.n,
                               {k: self[k] for k in names},
                               {k: self.midpoints[k] for k in names if k in self.midpoints})

    def row(self, k: int) -> dict[str, float]:
        env = {name: float(col[k]) for name, col in self.columns.items()}
        env[TIME] = float(self.t[k])
        return env

    # -- CSV -------------------------------------------------------------------

    def to_csv(self, path=None, columns: Sequence[str] | None = None, dense: bool = False) -> str:
        """Write ``t,<col>,...`` with 17 significant digits and LF line endings.

        With ``dense=True`` midpoint rows are interleaved (2n+1 rows); every
        listed column must then have midpoint samples.
        """
        names = list(columns) if columns is not None else self.names
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([TIME, *names])
        t, tm = self.t, self.t_mid
        grid_cols = [self[c] for c in names]
        mid_cols = [self.mid(c) for c in names] if dense else None
        for k in range(self.n + 1):
            writer.writerow([_fmt(t[k]), *(_fmt(c[k]) for c in grid_cols)])
            if dense and k < self.n:
                writer.writerow([_fmt(tm[k]), *(_fmt(c[k]) for c in mid_cols)])
        text = buf.getvalue()
        if path is not None:
            atomic_write(path, text)
        return text

    @classmethod
    def from_csv(cls, path, dense: bool = False) -> "TrajectoryTable":
        return cls.from_csv_text(Path(path).read_text(), dense=dense)

    @classmethod
    def from_csv_text(cls, text: str, dense: bool = False) -> "TrajectoryTable":
        """Parse CSV written by :meth:`to_csv`.

        Without ``dense`` the midpoint samples are recovered by cubic
        interpolation through the four nearest grid samples.
        """
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][:1] != [TIME]:
            raise ConfigError("CSV must start with a header row beginning with 't'")
        header = rows[0][1:]
        try:
            data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        except ValueError as exc:
            raise ConfigError(f"non-numeric CSV entry: {exc}") from None
        if data.ndim != 2 or data.shape[1] != len(header) + 1:
            raise ConfigError("ragged CSV rows")
        t = data[:, 0]
        if dense:
            if len(t) % 2 != 1:
                raise ConfigError("dense CSV needs an odd number of rows")
            grid, mids = data[0::2], data[1::2]
        else:
            grid, mids = data, None
        n = len(grid) - 1
        if n < 1:
            raise ConfigError("CSV needs at least two grid rows")
        t0 = float(grid[0, 0])
        h = (float(grid[-1, 0]) - t0) / n
        expected = t0 + h * np.arange(n + 1)
        if np.max(np.abs(grid[:, 0] - expected)) > 1e-9 * max(1.0, abs(grid[-1, 0])):
            raise GridMismatch("CSV time column is not a uniform grid")
        cols = {name: grid[:, i + 1] for i, name in enumerate(header)}
        if mids is not None:
            mid_cols = {name: mids[:, i + 1] for i, name in enumerate(header)}
        else:
            mid_cols = {name: interpolate_midpoints(col) for name, col in cols.items()}
        return cls(t0, h, n, cols, mid_cols)


def _frozen(values, length, name) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape != (length,):
        raise ConfigError(f"column {name!r} has shape {arr.shape}, expected ({length},)")
    arr.setflags(write=False)
    return arr


def _fmt(v) -> str:
    return format(float(v), ".17g")


def atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def interpolate_midpoints(col: np.ndarray) -> np.ndarray:
    """Values at ``k + 1/2`` from the cubic through the nearest four samples."""
    col = np.asarray(col, dtype=float)
    n = len(col) - 1
    width = min(4, n + 1)
    out = np.empty(n)
    for k in range(n):
        start = min(max(k - 1, 0), n + 1 - width)
        nodes = np.arange(start, start + width, dtype=float)
        x = k + 0.5
        total = 0.0
        for i, xi in enumerate(nodes):
            w = 1.0
            for j, xj in enumerate(nodes):
                if j != i:
                    w *= (x - xj) / (xi - xj)
            total += w * col[start + i]
        out[k] = total
    return out


def evaluate_on_table(e: Expr, table: TrajectoryTable, label: str = "",
                      extra: Mapping[str, tuple[Sequence[float], Sequence[float]]] | None = None,
                      midpoints: bool = True):
    """Evaluate ``e`` at every grid row and (optionally) every midpoint row.

    ``extra`` supplies additional (grid, midpoint) columns not stored in the
    table.  Domain errors carry the row index, time and ``label``.
    """
    f = compile_expr(e)
    names = sorted(variables(e) - {TIME})
    extra = extra or {}

    def source(name, mid):
        if name in extra:
            return list(extra[name][1 if mid else 0])
        return (table.mid(name) if mid else table[name]).tolist()

    grid_src = [source(nm, False) for nm in names]
    t = table.t.tolist()
    grid = np.empty(table.n + 1)
    env: dict[str, float] = {}
    for k in range(table.n + 1):
        env[TIME] = t[k]
        for nm, col in zip(names, grid_src):
            env[nm] = col[k]
        try:
            grid[k] = f(env)
        except DomainError as exc:
            raise exc.with_context(row=k, t=t[k], column=label) from None
    if not midpoints:
        return grid, None
    mid_src = [source(nm, True) for nm in names]
    tm = table.t_mid.tolist()
    mid = np.empty(table.n)
    for k in range(table.n):
        env[TIME] = tm[k]
        for nm, col in zip(names, mid_src):
            env[nm] = col[k]
        try:
            mid[k] = f(env)
        except DomainError as exc:
            raise exc.with_context(row=k + 0.5, t=tm[k], column=label) from None
    return grid, mid
