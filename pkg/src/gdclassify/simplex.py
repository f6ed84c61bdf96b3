"""Compositional data on the scaled simplex.

A composition is a vector of ``D + 1`` strictly positive parts summing to a
constant ``A``.  Besides validation and zero handling this module provides the
stick-breaking change of variables that turns a Generalized Dirichlet vector
into ``D`` independent scaled Beta variables, and the power / alpha
transformations that map the simplex onto unconstrained Euclidean space.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (AllZeroInput, DegenerateRemainder, EmptyAfterFiltering,
                     InputError, NonPositiveAlpha, NonPositiveComponent,
                     SumMismatch)

SUM_RTOL = 1e-9
ZERO_FILL = 1e-4


@dataclass(frozen=True)
class CompositionalSample:
    """A single point of the scaled simplex, optionally labelled."""

    values: np.ndarray
    scale: float = 1.0
    label: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def dim(self) -> int:
        """Number of free coordinates ``D`` (one less than the number of parts)."""
        return self.values.size - 1


@dataclass
class Dataset:
    """A labelled collection of compositions sharing dimension and scale.

    ``X`` holds one composition per row (``N x (D + 1)``).  ``labels`` are
    integer class indices in ``[0, class_count)``.
    """

    X: np.ndarray
    labels: Optional[np.ndarray] = None
    class_count: Optional[int] = None
    scale: float = 1.0
    names: Optional[list] = None
    class_names: Optional[list] = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if self.labels.shape != (self.X.shape[0],):
                raise InputError("one label per row is required")
            if self.class_count is None:
                self.class_count = int(self.labels.max()) + 1 if self.labels.size else 0
            if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
                raise InputError(f"labels must lie in [0, {self.class_count})")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1] - 1

    def __len__(self):
        return self.n_samples

    def subset(self, index) -> "Dataset":
        labels = None if self.labels is None else self.labels[index]
        return Dataset(self.X[index], labels, self.class_count, self.scale,
                       self.names, self.class_names)

    def samples(self):
        for n in range(self.n_samples):
            label = None if self.labels is None else int(self.labels[n])
            yield CompositionalSample(self.X[n], self.scale, label)

    @classmethod
    def from_samples(cls, samples: Sequence[CompositionalSample], class_count=None):
        samples = list(samples)
        if not samples:
            raise InputError("empty sample list")
        scale = samples[0].scale
        width = samples[0].values.size
        for s in samples:
            if s.values.size != width or s.scale != scale:
                raise InputError("samples must share dimensionality and scale")
        labels = None
        if all(s.label is not None for s in samples):
            labels = np.array([s.label for s in samples])
        return cls(np.vstack([s.values for s in samples]), labels, class_count, scale)


def validate_array(X, scale=1.0):
    """Check every row of ``X`` is a composition summing to ``scale``.

    Raises :class:`NonPositiveComponent` naming the first offending
    ``(row, column)`` or :class:`SumMismatch` with the deviation.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    bad = ~((X > 0) & (X < scale))
    if bad.any():
        row, col = np.argwhere(bad)[0]
        index = col if X.shape[0] == 1 else (int(row), int(col))
        raise NonPositiveComponent(index, float(X[row, col]))
    totals = X.sum(axis=1)
    off = np.abs(totals - scale) > SUM_RTOL * scale
    if off.any():
        row = int(np.flatnonzero(off)[0])
        raise SumMismatch(float(totals[row]), scale)


def validate(sample: CompositionalSample) -> None:
    validate_array(sample.values[None, :], sample.scale)


def zero_replace(raw, scale=1.0, fill=ZERO_FILL) -> np.ndarray:
    """Replace zeros by ``fill * scale`` and rescale so the parts sum to ``scale``.

    Works on a single vector or row-wise on a matrix.
    """
    raw = np.asarray(raw, dtype=float)
    single = raw.ndim == 1
    R = np.atleast_2d(raw)
    if R.shape[1] < 2:
        raise InputError("a composition needs at least two parts")
    if np.any(R < 0):
        raise InputError("negative entries cannot be zero-replaced")
    if np.any(R.sum(axis=1) == 0):
        raise AllZeroInput("cannot close an all-zero vector")
    R = np.where(R == 0, fill * scale, R)
    R = R * (scale / R.sum(axis=1, keepdims=True))
    return R[0] if single else R


def v_transform(X, scale=1.0) -> np.ndarray:
    """Stick-breaking coordinates ``v`` of compositions ``X`` (``N x (D+1)``).

    ``v_1 = x_1`` and ``v_d = A x_d / (A - sum_{l<d} x_l)`` so that every
    ``v_d`` lies in ``(0, A)``.  Returns an ``N x D`` array (or a ``D``
    vector for a single composition).
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    head = X[:, :-1]
    remainder = scale - np.concatenate(
        [np.zeros((X.shape[0], 1)), np.cumsum(head, axis=1)[:, :-1]], axis=1)
    if np.any(remainder <= 0):
        raise DegenerateRemainder("stick remainder is not positive; input is corrupt")
    V = scale * head / remainder
    return V[0] if single else V


def v_inverse(V, scale=1.0) -> np.ndarray:
    """Rebuild compositions from stick-breaking coordinates (inverse of :func:`v_transform`)."""
    V = np.asarray(V, dtype=float)
    single = V.ndim == 1
    V = np.atleast_2d(V)
    if np.any((V <= 0) | (V >= scale)):
        raise InputError("v coordinates must lie in (0, A)")
    # fraction of the stick left after each break
    left = np.cumprod(1.0 - V / scale, axis=1)
    before = np.concatenate([np.ones((V.shape[0], 1)), left[:, :-1]], axis=1)
    X = np.concatenate([V * before, scale * left[:, -1:]], axis=1)
    return X[0] if single else X


def log_jacobian(X, scale=1.0) -> np.ndarray:
    """``log |dv/dx|`` of the stick-breaking map, one value per row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    head = X[:, :-1]
    remainder = scale - np.concatenate(
        [np.zeros((X.shape[0], 1)), np.cumsum(head, axis=1)[:, :-1]], axis=1)
    return np.sum(np.log(scale) - np.log(remainder), axis=1)


def helmert_submatrix(D: int) -> np.ndarray:
    """Helmert matrix of order ``D + 1`` without its first (constant) row.

    Row ``i`` is ``(1, ..., 1, -i, 0, ..., 0) / sqrt(i (i + 1))`` with ``i``
    leading ones; rows are orthonormal and orthogonal to the ones vector.
    """
    if D < 1:
        raise InputError("D must be at least 1")
    H = np.zeros((D, D + 1))
    for i in range(1, D + 1):
        H[i - 1, :i] = 1.0
        H[i - 1, i] = -float(i)
        H[i - 1] /= np.sqrt(i * (i + 1.0))
    return H


def power_transform(X, alpha: float) -> np.ndarray:
    """Closure of ``x ** alpha`` (row-wise for matrices)."""
    if not alpha > 0:
        raise NonPositiveAlpha(f"alpha must be positive, got {alpha!r}")
    X = np.asarray(X, dtype=float)
    logs = alpha * np.log(X)
    logs -= logs.max(axis=-1, keepdims=True)
    U = np.exp(logs)
    return U / U.sum(axis=-1, keepdims=True)


def alpha_transform(X, alpha: float) -> np.ndarray:
    """Map unit-sum compositions to ``R^D``: ``H ((D+1) u_alpha(x) - 1) / alpha``."""
    X = np.asarray(X, dtype=float)
    parts = X.shape[-1]
    U = power_transform(X, alpha)
    H = helmert_submatrix(parts - 1)
    return ((parts * U - 1.0) / alpha) @ H.T


def ilr(X) -> np.ndarray:
    """Isometric log-ratio transform using the same Helmert basis.

    Only used as the small-alpha reference for :func:`alpha_transform`.
    """
    X = np.asarray(X, dtype=float)
    logs = np.log(X)
    clr = logs - logs.mean(axis=-1, keepdims=True)
    return clr @ helmert_submatrix(X.shape[-1] - 1).T


def preprocess_uci(table, labels=None, names=None, class_names=None) -> Dataset:
    """Turn an arbitrary numeric table into unit-sum compositions.

    Steps, in order: drop columns with at most two distinct values (binary or
    constant), standardize each column, min-max rescale each column to
    ``[0, 1]``, close each row to sum 1, then replace zeros.  A row that is
    zero in every retained column becomes the uniform composition.
    """
    T = np.asarray(table, dtype=float)
    if T.ndim != 2:
        raise InputError("expected a 2-D table")
    keep = np.array([np.unique(T[:, j]).size > 2 for j in range(T.shape[1])], dtype=bool)
    if keep.sum() < 2:
        raise EmptyAfterFiltering(
            f"{int(keep.sum())} non-binary column(s) left; a composition needs two")
    T = T[:, keep]
    T = (T - T.mean(axis=0)) / T.std(axis=0)
    lo, hi = T.min(axis=0), T.max(axis=0)
    T = (T - lo) / (hi - lo)
    totals = T.sum(axis=1, keepdims=True)
    empty = totals[:, 0] == 0
    T[empty] = 1.0
    totals[empty] = T.shape[1]
    X = zero_replace(T / totals, 1.0)
    kept_names = None if names is None else [n for n, k in zip(names, keep) if k]
    return Dataset(X, labels, None if class_names is None else len(class_names), 1.0,
                   kept_names, class_names)


@dataclass
class Table:
    """Raw CSV content: a numeric feature matrix plus a label column."""

    values: np.ndarray
    labels: Optional[np.ndarray]
    feature_names: list = field(default_factory=list)
    class_names: Optional[list] = None


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_csv(path, label=None) -> Table:
    """Read a CSV with an optional header row.

    ``label`` selects the label column by header name or by integer index
    (negative indices allowed).  Labels are mapped to ``0..C-1`` in sorted
    order of their distinct values; the original values are kept in
    ``class_names``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: no data rows")
    header = None
    if not all(_is_number(c) for i, c in enumerate(rows[0]) if not _label_pos_matches(i, label, rows[0])):
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    width = len(rows[0]) if rows else 0
    if not rows:
        raise InputError(f"{path}: no data rows")
    for lineno, r in enumerate(rows, start=2 if header else 1):
        if len(r) != width:
            raise InputError(f"{path}: row {lineno} has {len(r)} fields, expected {width}")
    col = None
    if label is not None:
        col = _resolve_column(label, header, width)
    names = header or [f"x{j}" for j in range(width)]
    feat_idx = [j for j in range(width) if j != col]
    try:
        values = np.array([[float(r[j]) for j in feat_idx] for r in rows])
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric feature value ({exc})") from None
    labels = class_names = None
    if col is not None:
        raw = [r[col].strip() for r in rows]
        if all(_is_number(v) for v in raw):
            keys = sorted(set(raw), key=float)
        else:
            keys = sorted(set(raw))
        lookup = {k: i for i, k in enumerate(keys)}
        labels = np.array([lookup[v] for v in raw])
        class_names = keys
    return Table(values, labels, [names[j] for j in feat_idx], class_names)


def _label_pos_matches(i, label, first_row):
    if isinstance(label, int):
        return i == (label % len(first_row))
    if isinstance(label, str) and label.lstrip("-").isdigit():
        return i == (int(label) % len(first_row))
    return False


def _resolve_column(label, header, width) -> int:
    if isinstance(label, int) or (isinstance(label, str) and label.lstrip("-").isdigit()):
        idx = int(label)
        if not -width <= idx < width:
            raise InputError(f"label column index {idx} out of range for {width} columns")
        return idx % width
    if header is None or label not in header:
        raise InputError(f"label column {label!r} not found in header")
    return header.index(label)


def dataset_from_table(table: Table, scale=1.0) -> Dataset:
    """Use CSV values as compositions directly, closing and zero-replacing rows."""
    X = zero_replace(table.values, scale)
    return Dataset(X, table.labels,
                   None if table.class_names is None else len(table.class_names),
                   scale, table.feature_names, table.class_names)
