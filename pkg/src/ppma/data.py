"""Data model, CSV ingestion and seeded train/test splitting.

Covariate matrices are stored as read-only float64 arrays; all operations
here are pure, so the containers are safe to share across threads.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .rng import generator

INTERCEPT_COLUMN = "_intercept"


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabeledData:
    """n observations with covariates ``X`` (n x q) and outcomes ``Y`` (n)."""

    X: np.ndarray
    Y: np.ndarray
    column_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "X", _freeze(np.atleast_2d(self.X)))
        object.__setattr__(self, "Y", _freeze(np.ravel(self.Y)))
        if not self.column_names:
            object.__setattr__(
                self, "column_names", tuple(f"x{j + 1}" for j in range(self.X.shape[1]))
            )
        else:
            object.__setattr__(self, "column_names", tuple(self.column_names))
        if self.X.ndim != 2 or self.X.shape[0] < 1:
            raise ValueError("X must be a matrix with at least one row")
        if not np.isfinite(self.X).all():
            raise ValueError("X contains non-finite entries")
        if not np.isfinite(self.Y).all():
            raise ValueError("Y contains non-finite entries")
        if self.Y.shape[0] != self.X.shape[0]:
            raise ValueError(f"Y has {self.Y.shape[0]} entries but X has {self.X.shape[0]} rows")
        if len(self.column_names) != self.X.shape[1]:
            raise ValueError("column_names length does not match X")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def q(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class UnlabeledData:
    """N covariate-only observations, column-compatible with a LabeledData."""

    Xtilde: np.ndarray
    column_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "Xtilde", _freeze(np.atleast_2d(self.Xtilde)))
        if not self.column_names:
            object.__setattr__(
                self, "column_names", tuple(f"x{j + 1}" for j in range(self.Xtilde.shape[1]))
            )
        else:
            object.__setattr__(self, "column_names", tuple(self.column_names))
        if self.Xtilde.ndim != 2 or self.Xtilde.shape[0] < 1:
            raise ValueError("Xtilde must be a matrix with at least one row")
        if not np.isfinite(self.Xtilde).all():
            raise ValueError("Xtilde contains non-finite entries")
        if len(self.column_names) != self.Xtilde.shape[1]:
            raise ValueError("column_names length does not match Xtilde")

    @property
    def N(self) -> int:
        return self.Xtilde.shape[0]

    @property
    def q(self) -> int:
        return self.Xtilde.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    """Train fraction and seed for a deterministic labeled-data split."""

    train_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def check_compatible(labeled: LabeledData, unlabeled: UnlabeledData) -> None:
    """Raise if the two datasets do not share the same covariate layout."""
    if labeled.column_names != unlabeled.column_names:
        raise ValueError(
            f"column mismatch: labeled {labeled.column_names} vs unlabeled {unlabeled.column_names}"
        )


def load_csv(path, outcome_col=None, covariate_cols=None):
    """Load a CSV with a header row into LabeledData or UnlabeledData.

    Args:
        path: CSV file (UTF-8, comma delimiter, header row required).
        outcome_col: name of the outcome column; when given the result is
            LabeledData, otherwise UnlabeledData.
        covariate_cols: covariate column names, in order.  Defaults to every
            column except the outcome, in file order.

    Every selected cell must parse as a finite real; errors name the
    offending row and column.  Row order is preserved.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, header row required") from None
        rows = list(reader)
    header = [h.strip() for h in header]
    col_index = {name: j for j, name in enumerate(header)}

    if outcome_col is not None and outcome_col not in col_index:
        raise ValueError(f"{path}: missing column {outcome_col!r}")
    if covariate_cols is None:
        covariate_cols = [c for c in header if c != outcome_col]
    covariate_cols = list(covariate_cols)
    for c in covariate_cols:
        if c not in col_index:
            raise ValueError(f"{path}: missing column {c!r}")
    if not rows:
        raise ValueError(f"{path}: no data rows")

    def parse(cell, row_num, col_name):
        try:
            value = float(cell)
        except ValueError:
            value = float("nan")
        if not np.isfinite(value):
            raise ValueError(
                f"{path}: cannot parse cell {cell!r} at row {row_num}, column {col_name!r}"
            )
        return value

    n = len(rows)
    X = np.empty((n, len(covariate_cols)))
    for i, row in enumerate(rows):
        for j, c in enumerate(covariate_cols):
            X[i, j] = parse(row[col_index[c]], i + 2, c)  # +2: header is line 1
    if outcome_col is None:
        return UnlabeledData(X, tuple(covariate_cols))
    Y = np.array([parse(rows[i][col_index[outcome_col]], i + 2, outcome_col) for i in range(n)])
    return LabeledData(X, Y, tuple(covariate_cols))


def write_csv(path, data, outcome_col="y") -> None:
    """Write LabeledData or UnlabeledData back to CSV.

    Numerics are serialized with shortest round-trip repr, so a
    load -> write -> load cycle is value-exact and byte-deterministic.
    """
    if isinstance(data, LabeledData):
        header = list(data.column_names) + [outcome_col]
        body = [[repr(v) for v in row] + [repr(y)] for row, y in zip(data.X, data.Y)]
    else:
        header = list(data.column_names)
        body = [[repr(v) for v in row] for row in data.Xtilde]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(body)


def split(data: LabeledData, spec: SplitSpec) -> tuple[LabeledData, LabeledData]:
    """Deterministic disjoint train/test partition of the rows.

    Train size is floor(n * train_fraction); the permutation comes from a
    Fisher-Yates shuffle driven by a counter-based generator, so the same
    seed always yields the same partition.
    """
    n = data.n
    n_train = int(np.floor(n * spec.train_fraction))
    if n_train < 1 or n - n_train < 1:
        raise ValueError(
            f"degenerate split: n={n}, train_fraction={spec.train_fraction} "
            f"gives sizes {n_train}/{n - n_train}"
        )
    gen = generator(spec.seed)
    idx = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(gen.integers(0, i + 1))
        idx[i], idx[j] = idx[j], idx[i]
    train_rows = np.sort(idx[:n_train])
    test_rows = np.sort(idx[n_train:])
    train = LabeledData(data.X[train_rows], data.Y[train_rows], data.column_names)
    test = LabeledData(data.X[test_rows], data.Y[test_rows], data.column_names)
    return train, test


def add_intercept(data):
    """Return a copy with a constant leading column, named ``_intercept``."""
    names = (INTERCEPT_COLUMN,) + tuple(data.column_names)
    if isinstance(data, LabeledData):
        X = np.column_stack([np.ones(data.n), data.X])
        return LabeledData(X, data.Y, names)
    X = np.column_stack([np.ones(data.N), data.Xtilde])
    return UnlabeledData(X, names)
