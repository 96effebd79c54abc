"""Dataset ingestion, binarization, stratified partitioning and k-fold splits.

A :class:`Dataset` is an immutable bundle of a dense feature matrix, binary
labels in {-1, +1} and stable integer sample ids.  Datasets read from a
multi-class source keep their raw labels until :func:`binarize` maps them to
a one-vs-rest problem.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Raised for malformed input files and invalid dataset operations."""


@dataclass(frozen=True)
class Sample:
    id: int
    features: np.ndarray
    label: int


class Dataset:
    """Ordered, immutable collection of samples sharing one feature dimension.

    ``labels`` is ``None`` for a dataset that still carries raw (multi-class)
    labels; call :func:`binarize` before training on it.
    """

    __slots__ = ("X", "labels", "ids", "raw_labels")

    def __init__(
        self,
        X: np.ndarray,
        labels: np.ndarray | None,
        ids: np.ndarray | None = None,
        raw_labels: Sequence[str] | None = None,
    ):
        X = np.array(X, dtype=np.float64, copy=True)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, 1)
        if X.ndim != 2:
            raise DataError("features must form a 2-D array")
        n = X.shape[0]
        if X.shape[1] < 1:
            raise DataError("feature dimension must be at least 1")
        if labels is not None:
            labels = np.array(labels, dtype=np.int64, copy=True).reshape(-1)
            if labels.shape[0] != n:
                raise DataError(f"{labels.shape[0]} labels for {n} samples")
            if n and not np.all((labels == 1) | (labels == -1)):
                raise DataError("labels must be -1 or +1")
        if ids is None:
            ids = np.arange(n, dtype=np.int64)
        else:
            ids = np.array(ids, dtype=np.int64, copy=True).reshape(-1)
            if ids.shape[0] != n:
                raise DataError(f"{ids.shape[0]} ids for {n} samples")
            if np.unique(ids).shape[0] != n:
                raise DataError("sample ids must be unique")
        if raw_labels is not None:
            raw_labels = tuple(str(r) for r in raw_labels)
            if len(raw_labels) != n:
                raise DataError(f"{len(raw_labels)} raw labels for {n} samples")
        for arr in (X, labels, ids):
            if arr is not None:
                arr.setflags(write=False)
        self.X = X
        self.labels = labels
        self.ids = ids
        self.raw_labels = raw_labels

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def class_counts(self) -> dict[int, int]:
        y = self.require_labels()
        return {1: int(np.count_nonzero(y == 1)), -1: int(np.count_nonzero(y == -1))}

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise DataError("dataset has raw labels only; binarize it first")
        return self.labels

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[Sample]:
        y = self.require_labels()
        for k in range(self.n):
            yield Sample(int(self.ids[k]), self.X[k], int(y[k]))

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, dim={self.dim})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        same_labels = (
            (self.labels is None and other.labels is None)
            or (
                self.labels is not None
                and other.labels is not None
                and np.array_equal(self.labels, other.labels)
            )
        )
        return (
            self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.ids, other.ids)
            and same_labels
            and self.raw_labels == other.raw_labels
        )

    __hash__ = None  # type: ignore[assignment]

    def subset(self, index: np.ndarray | Sequence[int]) -> Dataset:
        """Samples at the given positions, keeping their ids."""
        index = np.asarray(index, dtype=np.int64)
        raw = None
        if self.raw_labels is not None:
            raw = [self.raw_labels[k] for k in index]
        return Dataset(
            self.X[index].reshape(len(index), self.dim),
            None if self.labels is None else self.labels[index],
            self.ids[index],
            raw,
        )

    def concat(self, other: Dataset) -> Dataset:
        if other.dim != self.dim:
            raise DataError(f"dimension mismatch: {self.dim} vs {other.dim}")
        return Dataset(
            np.vstack([self.X, other.X]),
            np.concatenate([self.require_labels(), other.require_labels()]),
            np.concatenate([self.ids, other.ids]),
        )

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], dim: int | None = None) -> Dataset:
        if not samples:
            return cls(np.zeros((0, dim or 1)), np.zeros(0, dtype=np.int64), np.zeros(0))
        return cls(
            np.vstack([s.features for s in samples]),
            [s.label for s in samples],
            [s.id for s in samples],
        )


# ---------------------------------------------------------------- parsing


def _parse_label(token: str, lineno: int) -> int:
    try:
        value = int(token)
    except ValueError:
        try:
            as_float = float(token)
        except ValueError:
            raise DataError(f"line {lineno}: label {token!r} is not an integer") from None
        if not as_float.is_integer():
            raise DataError(f"line {lineno}: label {token!r} is not an integer") from None
        value = int(as_float)
    if not -(2**63) <= value < 2**63:
        raise DataError(f"line {lineno}: label {token!r} outside the integer range")
    return value


def parse_sparse(path: str | Path) -> Dataset:
    """Read a LIBSVM/SVMlight style file: ``<label> <index>:<value> ...`` per line.

    Indices are 1-based and strictly ascending; ``#`` starts a comment.  The
    dimension is the largest index seen anywhere in the file.  If every label
    is -1 or +1 the dataset is ready to train, otherwise only raw labels are
    kept.
    """
    path = Path(path)
    labels: list[int] = []
    rows: list[tuple[list[int], list[float]]] = []
    dim = 0
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            labels.append(_parse_label(tokens[0], lineno))
            idx: list[int] = []
            vals: list[float] = []
            last = 0
            for tok in tokens[1:]:
                key, sep, val = tok.partition(":")
                if not sep:
                    raise DataError(f"line {lineno}: expected index:value, got {tok!r}")
                try:
                    k = int(key)
                    v = float(val)
                except ValueError:
                    raise DataError(f"line {lineno}: malformed feature {tok!r}") from None
                if k < 1:
                    raise DataError(f"line {lineno}: feature index {k} must be >= 1")
                if k <= last:
                    raise DataError(f"line {lineno}: feature indices must be strictly ascending")
                last = k
                idx.append(k)
                vals.append(v)
            dim = max(dim, last)
            rows.append((idx, vals))
    X = np.zeros((len(rows), max(dim, 1)))
    for r, (idx, vals) in enumerate(rows):
        if idx:
            X[r, np.asarray(idx) - 1] = vals
    raw = [str(v) for v in labels]
    if all(v in (-1, 1) for v in labels):
        return Dataset(X, labels, raw_labels=raw)
    return Dataset(X, None, raw_labels=raw)


def _format_value(v: float) -> str:
    return repr(float(v))


def format_sparse_features(x: np.ndarray) -> str:
    return " ".join(f"{k + 1}:{_format_value(x[k])}" for k in np.flatnonzero(x))


def serialize_sparse(dataset: Dataset, path: str | Path) -> None:
    """Write ``dataset`` in the sparse format; zero features are omitted.

    The highest feature index is always written so that the dimension
    survives a round trip even when trailing columns are zero.
    """
    y = dataset.require_labels()
    with Path(path).open("w", encoding="utf-8") as fh:
        for k in range(dataset.n):
            x = dataset.X[k]
            feats = format_sparse_features(x)
            if x[-1] == 0.0:
                feats = (feats + " " if feats else "") + f"{dataset.dim}:0.0"
            label = "+1" if y[k] > 0 else "-1"
            fh.write(f"{label} {feats}\n" if feats else f"{label}\n")


def parse_csv(path: str | Path, label_column: int = -1) -> Dataset:
    """Read a comma-separated file; ``label_column`` may be negative.

    Labels are kept as raw strings (use :func:`binarize`); every other column
    becomes a feature in file order.
    """
    path = Path(path)
    rows: list[list[float]] = []
    raw: list[str] = []
    width = None
    with path.open("r", newline="", encoding="utf-8") as fh:
        for rowno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise DataError(f"row {rowno}: need at least one feature and a label")
                col = label_column if label_column >= 0 else width + label_column
                if not 0 <= col < width:
                    raise DataError(f"label column {label_column} out of range for {width} columns")
            elif len(row) != width:
                raise DataError(f"row {rowno}: expected {width} columns, found {len(row)}")
            feats = []
            for c, cell in enumerate(row):
                if c == col:
                    continue
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"row {rowno}, column {c + 1}: non-numeric value {cell.strip()!r}"
                    ) from None
            rows.append(feats)
            raw.append(row[col].strip())
    if width is None:
        return Dataset(np.zeros((0, 1)), None, raw_labels=[])
    return Dataset(np.array(rows).reshape(len(rows), width - 1), None, raw_labels=raw)


def binarize(dataset: Dataset, positive: str | int) -> Dataset:
    """One-vs-rest labels: raw label ``positive`` becomes +1, everything else -1."""
    if dataset.raw_labels is None:
        raise DataError("dataset carries no raw labels")
    positive = str(positive)
    hits = np.array([r == positive for r in dataset.raw_labels], dtype=bool)
    if not hits.any():
        raise DataError(f"positive class {positive!r} does not occur in the dataset")
    return Dataset(dataset.X, np.where(hits, 1, -1), dataset.ids, dataset.raw_labels)


def load(path: str | Path, fmt: str = "sparse", label_column: int = -1,
         positive: str | None = None) -> Dataset:
    """Parse ``path`` and binarize when a positive class is given."""
    if fmt == "sparse":
        data = parse_sparse(path)
    elif fmt == "csv":
        data = parse_csv(path, label_column)
    else:
        raise DataError(f"unknown format {fmt!r}")
    if positive is not None:
        data = binarize(data, positive)
    return data


def minmax_scale(dataset: Dataset) -> Dataset:
    """Scale every feature column to [0, 1]; constant columns become 0."""
    X = dataset.X
    if dataset.n == 0:
        return dataset
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    return Dataset((X - lo) / safe, dataset.labels, dataset.ids, dataset.raw_labels)


# ------------------------------------------------------------- partitioning


@dataclass(frozen=True)
class PartitionSet:
    partitions: list[Dataset]
    seed: int

    @property
    def L(self) -> int:
        return len(self.partitions)


def _stratified_assignment(y: np.ndarray, parts: int, seed: int) -> np.ndarray:
    """Part index for every position of ``y``.

    Each class is shuffled with a seeded permutation and dealt round-robin;
    the dealing position carries over from one class to the next so that
    total part sizes stay within one of each other as well.
    """
    rng = np.random.default_rng(seed)
    assign = np.empty(y.shape[0], dtype=np.int64)
    offset = 0
    for cls in (1, -1):
        members = np.flatnonzero(y == cls)
        members = members[rng.permutation(members.shape[0])]
        assign[members] = (offset + np.arange(members.shape[0])) % parts
        offset = (offset + members.shape[0]) % parts
    return assign


def stratified_partition(dataset: Dataset, L: int, seed: int) -> PartitionSet:
    """Split into ``L`` disjoint parts balanced in size and class mix (within 1)."""
    y = dataset.require_labels()
    if L < 1:
        raise DataError(f"partition count must be >= 1, got {L}")
    if L > dataset.n:
        raise DataError(f"cannot split {dataset.n} samples into {L} partitions")
    assign = _stratified_assignment(y, L, seed)
    parts = [dataset.subset(np.flatnonzero(assign == l)) for l in range(L)]
    return PartitionSet(parts, seed)


def kfold_split(dataset: Dataset, k: int, seed: int) -> list[tuple[Dataset, Dataset]]:
    """Stratified k-fold: ``k`` (train, test) pairs whose test sets cover the data once."""
    y = dataset.require_labels()
    if k < 2:
        raise DataError(f"need at least 2 folds, got {k}")
    if k > dataset.n:
        raise DataError(f"cannot make {k} folds from {dataset.n} samples")
    assign = _stratified_assignment(y, k, seed)
    return [
        (dataset.subset(np.flatnonzero(assign != f)), dataset.subset(np.flatnonzero(assign == f)))
        for f in range(k)
    ]


def stratified_subsample(dataset: Dataset, size: int, seed: int) -> Dataset:
    """Class-proportional random subset of ``size`` samples, in original order."""
    y = dataset.require_labels()
    if size >= dataset.n:
        return dataset
    rng = np.random.default_rng(seed)
    keep: list[np.ndarray] = []
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == -1)
    n_pos = int(round(size * pos.shape[0] / dataset.n))
    n_pos = min(max(n_pos, 1 if pos.shape[0] else 0), pos.shape[0])
    n_neg = min(size - n_pos, neg.shape[0])
    keep.append(rng.choice(pos, n_pos, replace=False))
    keep.append(rng.choice(neg, n_neg, replace=False))
    return dataset.subset(np.sort(np.concatenate(keep)))


def make_synthetic(n: int, dim: int = 10, seed: int = 0, separation: float = 3.0) -> Dataset:
    """Two Gaussian clouds with unit covariance, means ``separation`` apart."""
    rng = np.random.default_rng(seed)
    n_pos = n // 2
    y = np.concatenate([np.ones(n_pos, dtype=np.int64), -np.ones(n - n_pos, dtype=np.int64)])
    shift = np.zeros(dim)
    shift[0] = separation / 2.0
    X = rng.standard_normal((n, dim)) + np.where(y[:, None] > 0, shift, -shift)
    order = rng.permutation(n)
    return Dataset(X[order], y[order])


def describe(dataset: Dataset) -> str:
    counts = dataset.class_counts if dataset.labels is not None else None
    parts = [f"n={dataset.n}", f"dim={dataset.dim}"]
    if counts is not None:
        parts.append(f"pos={counts[1]}")
        parts.append(f"neg={counts[-1]}")
    elif dataset.raw_labels is not None:
        parts.append(f"classes={len(set(dataset.raw_labels))}")
    return " ".join(parts)


__all__ = [
    "DataError",
    "Dataset",
    "PartitionSet",
    "Sample",
    "binarize",
    "describe",
    "kfold_split",
    "load",
    "make_synthetic",
    "minmax_scale",
    "parse_csv",
    "parse_sparse",
    "serialize_sparse",
    "stratified_partition",
    "stratified_subsample",
]
