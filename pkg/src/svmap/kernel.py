"""Kernel functions and cached Gram-row access."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .dataset import Dataset

KINDS = ("linear", "rbf")
LINEAR, RBF = 0, 1


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice.  ``gamma`` only matters for ``rbf``."""

    kind: str = "linear"
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel {self.kind!r}; expected one of {KINDS}")
        if self.kind == "rbf" and not self.gamma > 0:
            raise ValueError(f"rbf kernel needs gamma > 0, got {self.gamma}")

    @property
    def code(self) -> int:
        return LINEAR if self.kind == "linear" else RBF


def kernel_rows(spec: KernelSpec, X: np.ndarray, x: np.ndarray) -> np.ndarray:
    """K(X[j], x) for every row j of ``X``.

    Reductions run along contiguous rows so that every entry is summed in the
    same order as :func:`kernel_eval`; this keeps Gram rows exactly symmetric.
    """
    if X.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {x.shape[0]}")
    if spec.kind == "linear":
        return np.sum(X * x, axis=1)
    diff = X - x
    return np.exp(-spec.gamma * np.sum(diff * diff, axis=1))


def kernel_eval(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(kernel_rows(spec, a.reshape(1, -1), b)[0])


def gram_row(spec: KernelSpec, dataset: Dataset, i: int) -> np.ndarray:
    if not 0 <= i < dataset.n:
        raise IndexError(f"sample index {i} out of range for n={dataset.n}")
    return kernel_rows(spec, dataset.X, dataset.X[i])


def gram_matrix(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    """Full Gram matrix built row by row (test and oracle sizes only)."""
    if X.shape[0] == 0:
        return np.zeros((0, 0))
    return np.vstack([kernel_rows(spec, X, X[i]) for i in range(X.shape[0])])


# Compiled row cache used inside the SMO loop.  Rows are computed with plain
# sequential sums, which are symmetric in (i, j) just like kernel_rows.


def cache_slots(n: int, capacity_mb: float) -> int:
    """Number of Gram rows of length ``n`` that fit in ``capacity_mb``.

    Never fewer than two (a solver step touches a pair), never more than n.
    """
    if capacity_mb <= 0:
        return 2
    return int(min(max(2, int(capacity_mb * 2**20) // max(8 * n, 1)), max(n, 2)))


@numba.njit(cache=True)
def _fill_row(X, i, kind, gamma, out):
    n, d = X.shape
    for j in range(n):
        acc = 0.0
        if kind == LINEAR:
            for k in range(d):
                acc += X[j, k] * X[i, k]
            out[j] = acc
        else:
            for k in range(d):
                diff = X[j, k] - X[i, k]
                acc += diff * diff
            out[j] = np.exp(-gamma * acc)


@numba.njit(cache=True)
def kernel_diagonal(X, kind):
    n, d = X.shape
    out = np.ones(n)
    if kind == LINEAR:
        for i in range(n):
            acc = 0.0
            for k in range(d):
                acc += X[i, k] * X[i, k]
            out[i] = acc
    return out


@numba.njit(cache=True)
def new_row_cache(n, slots):
    """(rows, slot_of, owner, stamp, counters) arrays of an empty LRU cache."""
    rows = np.empty((slots, n))
    slot_of = np.full(n, -1, dtype=np.int64)
    owner = np.full(slots, -1, dtype=np.int64)
    stamp = np.zeros(slots, dtype=np.int64)
    counters = np.zeros(3, dtype=np.int64)  # clock, hits, misses
    return rows, slot_of, owner, stamp, counters


@numba.njit(cache=True)
def cached_row(X, kind, gamma, i, rows, slot_of, owner, stamp, counters):
    """Slot index holding Gram row ``i``, computing it on a miss and evicting
    the least recently used row when the cache is full."""
    counters[0] += 1
    s = slot_of[i]
    if s >= 0:
        counters[1] += 1
        stamp[s] = counters[0]
        return s
    counters[2] += 1
    s = 0
    for k in range(owner.shape[0]):
        if owner[k] < 0:
            s = k
            break
        if stamp[k] < stamp[s]:
            s = k
    if owner[s] >= 0:
        slot_of[owner[s]] = -1
    owner[s] = i
    slot_of[i] = s
    stamp[s] = counters[0]
    _fill_row(X, i, kind, gamma, rows[s])
    return s


class RowCache:
    """Python-side handle on the compiled LRU cache (inspection and tests)."""

    def __init__(self, spec: KernelSpec, X: np.ndarray, capacity_mb: float = 100.0):
        self.spec = spec
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.slots = cache_slots(self.X.shape[0], capacity_mb)
        self._state = new_row_cache(self.X.shape[0], self.slots)

    def row(self, i: int) -> np.ndarray:
        if not 0 <= i < self.X.shape[0]:
            raise IndexError(f"row {i} out of range")
        s = cached_row(self.X, self.spec.code, float(self.spec.gamma), i, *self._state)
        return self._state[0][s].copy()

    @property
    def hits(self) -> int:
        return int(self._state[4][1])

    @property
    def misses(self) -> int:
        return int(self._state[4][2])
