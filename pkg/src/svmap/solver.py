"""Soft-margin SVM dual solved by Sequential Minimal Optimization.

The dual problem is::

    minimize    F(a) = 1/2 a'Qa - sum(a)
    subject to  0 <= a_i <= C,  y'a = 0,     Q_ij = y_i y_j K(x_i, x_j)

The solver walks maximal violating pairs (first-order working-set selection)
until the pair gap drops below ``kkt_tol``.  :func:`oracle_solve` is an
unrelated dense interior-point method used to cross-check it on small inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .dataset import Dataset, format_sparse_features
from .kernel import LINEAR, KernelSpec, cache_slots, cached_row, gram_matrix, kernel_diagonal, new_row_cache

logger = logging.getLogger(__name__)

TAU = 1e-12
MAX_PAIR_UPDATES = 10_000_000
ORACLE_MAX_N = 50


class TrainingError(RuntimeError):
    """The dataset cannot be trained on (single class, too few samples)."""


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    C: float = 1.0
    kernel: KernelSpec = field(default_factory=KernelSpec)
    kkt_tol: float = 1e-3
    # Pair-update budget in units of n updates; None means 10 (capped at 1e7 updates).
    max_solver_passes: int | None = None
    sv_epsilon: float = 1e-8
    cache_mb: float = 100.0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if not self.kkt_tol > 0:
            raise ValueError(f"kkt_tol must be positive, got {self.kkt_tol}")
        if not 0 <= self.sv_epsilon < self.C:
            raise ValueError(f"sv_epsilon must lie in [0, C), got {self.sv_epsilon}")
        if self.max_solver_passes is not None and self.max_solver_passes < 1:
            raise ValueError("max_solver_passes must be >= 1")

    def update_budget(self, n: int) -> int:
        passes = 10 if self.max_solver_passes is None else self.max_solver_passes
        return max(1, min(passes * n * n, MAX_PAIR_UPDATES))


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Trained binary classifier.  ``support`` holds the support vectors
    (ids, features, labels) and ``alphas`` their dual coefficients."""

    support: Dataset
    alphas: np.ndarray
    bias: float
    kernel: KernelSpec
    objective: float
    dim: int
    converged: bool = True
    iterations: int = 0

    @property
    def n_sv(self) -> int:
        return self.support.n

    @property
    def coef(self) -> np.ndarray:
        """alpha_i * y_i per support vector."""
        return self.alphas * self.support.require_labels()

    @property
    def weights(self) -> np.ndarray:
        if self.kernel.kind != "linear":
            raise ValueError("explicit weights exist only for the linear kernel")
        return self.coef @ self.support.X if self.n_sv else np.zeros(self.dim)

    def same_as(self, other: SvmModel) -> bool:
        """Bitwise equality of everything that defines the classifier."""
        return (
            self.kernel == other.kernel
            and self.dim == other.dim
            and self.support == other.support
            and np.array_equal(self.alphas, other.alphas)
            and self.bias == other.bias
            and self.objective == other.objective
        )


# ------------------------------------------------------------------ training


def _check_trainable(dataset: Dataset) -> np.ndarray:
    y = dataset.require_labels()
    if dataset.n < 2:
        raise TrainingError(f"need at least 2 samples to train, got {dataset.n}")
    if np.all(y == y[0]):
        raise TrainingError("training set contains a single class")
    return y


def _bias(alpha: np.ndarray, y: np.ndarray, grad: np.ndarray, C: float) -> float:
    """Average over free SVs of y_i - sum_j a_j y_j K_ji, else the midpoint of
    the interval allowed by the bound variables."""
    v = -y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(np.mean(v[free]))
    at_zero = alpha == 0
    lower = ((y > 0) & at_zero) | ((y < 0) & ~at_zero)
    upper = ~lower
    lo = v[lower].max() if lower.any() else None
    hi = v[upper].min() if upper.any() else None
    if lo is None:
        return float(hi)
    if hi is None:
        return float(lo)
    return float((lo + hi) / 2.0)


def _build_model(dataset: Dataset, alpha: np.ndarray, grad: np.ndarray, config: TrainConfig,
                 converged: bool, iterations: int) -> SvmModel:
    y = dataset.require_labels()
    bias = _bias(alpha, y, grad, config.C)
    objective = float(0.5 * np.dot(alpha, grad - 1.0))
    keep = np.flatnonzero(alpha > config.sv_epsilon)
    return SvmModel(
        support=dataset.subset(keep),
        alphas=alpha[keep].copy(),
        bias=bias,
        kernel=config.kernel,
        objective=objective,
        dim=dataset.dim,
        converged=converged,
        iterations=iterations,
    )


@numba.njit(cache=True)
def _smo(X, y, C, tol, budget, kind, gamma, slots, alpha, grad):
    """Maximal-violating-pair SMO on ``alpha``/``grad`` in place.

    Returns (pair updates, converged, cache hits, cache misses).
    """
    n = X.shape[0]
    diag = kernel_diagonal(X, kind)
    rows, slot_of, owner, stamp, counters = new_row_cache(n, slots)
    for s in range(n):
        if alpha[s] > 0:
            Ks = rows[cached_row(X, kind, gamma, s, rows, slot_of, owner, stamp, counters)]
            c = y[s] * alpha[s]
            for t in range(n):
                grad[t] += y[t] * Ks[t] * c
    it = 0
    converged = False
    while it < budget:
        # I_up: a_t may move along +y_t; I_low: along -y_t.
        i = -1
        j = -1
        vmax = -np.inf
        vmin = np.inf
        for t in range(n):
            v = -y[t] * grad[t]
            if y[t] > 0:
                up = alpha[t] < C
                low = alpha[t] > 0
            else:
                up = alpha[t] > 0
                low = alpha[t] < C
            if up and v > vmax:
                vmax = v
                i = t
            if low and v < vmin:
                vmin = v
                j = t
        if i < 0 or j < 0 or vmax - vmin <= tol:
            converged = True
            break
        gap = vmax - vmin
        si = cached_row(X, kind, gamma, i, rows, slot_of, owner, stamp, counters)
        sj = cached_row(X, kind, gamma, j, rows, slot_of, owner, stamp, counters)
        Ki = rows[si]
        Kj = rows[sj]
        yi = y[i]
        yj = y[j]
        room_i = C - alpha[i] if yi > 0 else alpha[i]
        room_j = alpha[j] if yj > 0 else C - alpha[j]
        quad = diag[i] + diag[j] - 2.0 * Ki[j]
        if quad <= TAU:
            quad = TAU
        step = gap / quad
        new_i = alpha[i] + yi * step
        new_j = alpha[j] - yj * step
        if step >= room_i:
            step = room_i
            new_i = C if yi > 0 else 0.0
            new_j = alpha[j] - yj * step
        if step >= room_j:
            step = room_j
            new_j = 0.0 if yj > 0 else C
            new_i = alpha[i] + yi * step
            if step == room_i:
                new_i = C if yi > 0 else 0.0
        ci = yi * (new_i - alpha[i])
        cj = yj * (new_j - alpha[j])
        alpha[i] = new_i
        alpha[j] = new_j
        for t in range(n):
            grad[t] += y[t] * (Ki[t] * ci + Kj[t] * cj)
        it += 1
    return it, converged, counters[1], counters[2]


def warm_alphas(dataset: Dataset, previous: SvmModel) -> np.ndarray:
    """Starting point for ``dataset`` taken from a model trained on a subset
    of it: previous coefficients where ids match, zero elsewhere."""
    alpha = np.zeros(dataset.n)
    where = {int(i): k for k, i in enumerate(dataset.ids)}
    for sid, a in zip(previous.support.ids, previous.alphas):
        k = where.get(int(sid))
        if k is not None:
            alpha[k] = a
    return alpha


def train_svm(dataset: Dataset, config: TrainConfig, init_alpha: np.ndarray | None = None) -> SvmModel:
    """Solve the dual with SMO and return the resulting model.

    ``init_alpha`` warm-starts the solver; it must be feasible (inside the
    box, y'a = 0 up to rounding).  Running out of the update budget is not an
    error: the last iterate is returned with ``converged=False``.
    """
    y = _check_trainable(dataset)
    n = dataset.n
    X = np.ascontiguousarray(dataset.X)
    if init_alpha is None:
        alpha = np.zeros(n)
    else:
        alpha = np.clip(np.array(init_alpha, dtype=np.float64), 0.0, config.C)
        if alpha.shape != (n,):
            raise ValueError(f"init_alpha has shape {alpha.shape}, expected ({n},)")
    grad = -np.ones(n)
    slots = cache_slots(n, config.cache_mb)
    it, converged, hits, misses = _smo(
        X, y.astype(np.float64), float(config.C), float(config.kkt_tol),
        config.update_budget(n), config.kernel.code, float(config.kernel.gamma), slots,
        alpha, grad,
    )
    if not converged:
        logger.warning("SMO stopped after %d pair updates without reaching kkt_tol=%g",
                       it, config.kkt_tol)
    logger.debug("SMO n=%d updates=%d cache slots=%d hits=%d misses=%d",
                 n, it, slots, hits, misses)
    return _build_model(dataset, alpha, grad, config, bool(converged), int(it))


# ----------------------------------------------------------------- inference


@numba.njit(cache=True)
def _decision(X, S, coef, bias, kind, gamma):
    n, d = X.shape
    out = np.empty(n)
    for r in range(n):
        f = 0.0
        for s in range(S.shape[0]):
            acc = 0.0
            if kind == LINEAR:
                for k in range(d):
                    acc += S[s, k] * X[r, k]
                f += coef[s] * acc
            else:
                for k in range(d):
                    diff = S[s, k] - X[r, k]
                    acc += diff * diff
                f += coef[s] * np.exp(-gamma * acc)
        out[r] = f + bias
    return out


def decision_values(model: SvmModel, X: np.ndarray) -> np.ndarray:
    """f(x) = sum_i a_i y_i K(x_i, x) + b for every row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.dim:
        raise ValueError(f"dimension mismatch: model has {model.dim}, input has {X.shape[1]}")
    return _decision(np.ascontiguousarray(X), np.ascontiguousarray(model.support.X),
                     model.coef, float(model.bias), model.kernel.code, float(model.kernel.gamma))


def decision_value(model: SvmModel, x: np.ndarray) -> float:
    return float(decision_values(model, np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def predict(model: SvmModel, x: np.ndarray) -> int:
    return 1 if decision_value(model, x) >= 0 else -1


def predict_many(model: SvmModel, X: np.ndarray) -> np.ndarray:
    return np.where(decision_values(model, X) >= 0, 1, -1)


def extract_svs(model: SvmModel) -> Dataset:
    """Support vectors (alpha above ``sv_epsilon``) with their original ids."""
    assert model.n_sv > 0, "a trained binary model always has support vectors"
    return model.support


def kkt_violations(model: SvmModel, dataset: Dataset, alpha_full: np.ndarray, C: float,
                   tol: float) -> np.ndarray:
    """Positions in ``dataset`` whose (alpha, margin) pair breaks the KKT
    conditions by more than ``tol``."""
    y = dataset.require_labels()
    margin = y * decision_values(model, dataset.X)
    bad = np.zeros(dataset.n, dtype=bool)
    zero = alpha_full == 0
    bound = alpha_full >= C
    free = ~zero & ~bound
    bad |= zero & (margin < 1 - tol)
    bad |= free & (np.abs(margin - 1) > tol)
    bad |= bound & (margin > 1 + tol)
    return np.flatnonzero(bad)


def full_alphas(model: SvmModel, dataset: Dataset) -> np.ndarray:
    """Dual coefficients laid out over ``dataset`` (zero for non-SVs)."""
    out = np.zeros(dataset.n)
    where = {int(i): k for k, i in enumerate(dataset.ids)}
    for sid, a in zip(model.support.ids, model.alphas):
        out[where[int(sid)]] = a
    return out


def dual_objective(alpha: np.ndarray, dataset: Dataset, kernel: KernelSpec) -> float:
    """F(a) evaluated densely (test sizes)."""
    y = dataset.require_labels().astype(np.float64)
    Q = gram_matrix(kernel, dataset.X) * np.outer(y, y)
    return float(0.5 * alpha @ Q @ alpha - alpha.sum())


# -------------------------------------------------------------------- oracle


def oracle_solve(dataset: Dataset, config: TrainConfig, tol: float = 1e-10) -> SvmModel:
    """Reference solution by a dense primal-dual interior-point method.

    Independent of the SMO path: it works on the full Q matrix, follows the
    central path with Newton steps on the KKT system and stops when the
    duality gap and residuals fall below ``tol``.  Only meant for n <= 50.
    """
    y = _check_trainable(dataset)
    n = dataset.n
    if n > ORACLE_MAX_N:
        raise ValueError(f"oracle_solve is limited to n <= {ORACLE_MAX_N}, got {n}")
    C = float(config.C)
    yf = y.astype(np.float64)
    Q = gram_matrix(config.kernel, dataset.X) * np.outer(yf, yf)
    a = np.full(n, C / 2.0)
    nu = 0.0
    z = np.ones(n)  # multipliers of a >= 0
    s = np.ones(n)  # multipliers of a <= C
    for _ in range(200):
        w = C - a
        r_dual = Q @ a - 1.0 + yf * nu - z + s
        r_prim = yf @ a
        gap = z @ a + s @ w
        if gap < tol * 1e-2 and np.max(np.abs(r_dual)) < tol and abs(r_prim) < tol:
            break
        mu = 0.1 * gap / (2 * n)
        H = Q + np.diag(z / a + s / w)
        rhs = -r_dual + mu / a - z - mu / w + s
        KKT = np.zeros((n + 1, n + 1))
        KKT[:n, :n] = H
        KKT[:n, n] = yf
        KKT[n, :n] = yf
        sol = np.linalg.solve(KKT, np.concatenate([rhs, [-r_prim]]))
        da, dnu = sol[:n], sol[n]
        dz = (mu - a * z - z * da) / a
        ds = (mu - w * s + s * da) / w
        step = 1.0
        for val, dval in ((a, da), (w, -da), (z, dz), (s, ds)):
            neg = dval < 0
            if neg.any():
                step = min(step, 0.99 * float(np.min(-val[neg] / dval[neg])))
        a = a + step * da
        nu += step * dnu
        z = z + step * dz
        s = s + step * ds
    else:
        raise RuntimeError("interior-point oracle did not converge")
    snap = tol * max(C, 1.0) * 1e2
    a = np.where(a < snap, 0.0, np.where(a > C - snap, C, a))
    grad = Q @ a - 1.0
    model = _build_model(dataset, a, grad, config, True, 0)
    return model


# ------------------------------------------------------------- serialization

MODEL_MAGIC = "svmap_model 1"


def write_model(model: SvmModel, path: str | Path) -> None:
    """Text format: ``key value`` header, then one ``<a_i*y_i> <index>:<value> ...``
    line per support vector with its sample id in a trailing comment."""
    lines = [
        MODEL_MAGIC,
        f"kernel {model.kernel.kind}",
        f"gamma {model.kernel.gamma!r}",
        f"dim {model.dim}",
        f"bias {model.bias!r}",
        f"objective {model.objective!r}",
        f"converged {int(model.converged)}",
        f"iterations {model.iterations}",
        f"nr_sv {model.n_sv}",
        "SV",
    ]
    for k in range(model.n_sv):
        coef = float(model.coef[k])
        feats = format_sparse_features(model.support.X[k])
        body = f"{coef!r} {feats}" if feats else f"{coef!r}"
        lines.append(f"{body} # id={int(model.support.ids[k])}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_model(path: str | Path) -> SvmModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"{path}: not a text model file") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: missing '{MODEL_MAGIC}' header")
    header: dict[str, str] = {}
    k = 1
    while k < len(lines) and lines[k].strip() != "SV":
        key, _, value = lines[k].strip().partition(" ")
        header[key] = value.strip()
        k += 1
    if k == len(lines):
        raise ModelFormatError(f"{path}: missing SV section")
    try:
        kernel = KernelSpec(header["kernel"], float(header["gamma"]))
        dim = int(header["dim"])
        bias = float(header["bias"])
        objective = float(header["objective"])
        converged = bool(int(header["converged"]))
        iterations = int(header["iterations"])
        nr_sv = int(header["nr_sv"])
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"{path}: bad header ({exc})") from exc
    body = [ln for ln in lines[k + 1:] if ln.strip()]
    if len(body) != nr_sv:
        raise ModelFormatError(f"{path}: expected {nr_sv} support vectors, found {len(body)}")
    X = np.zeros((nr_sv, dim))
    coef = np.zeros(nr_sv)
    ids = np.zeros(nr_sv, dtype=np.int64)
    for r, ln in enumerate(body):
        data, _, comment = ln.partition("#")
        comment = comment.strip()
        try:
            if not comment.startswith("id="):
                raise ValueError("missing id comment")
            ids[r] = int(comment[3:])
            tokens = data.split()
            coef[r] = float(tokens[0])
            last = 0
            for tok in tokens[1:]:
                idx, _, val = tok.partition(":")
                col = int(idx)
                if not last < col <= dim:
                    raise ValueError(f"feature index {col} out of order or range")
                X[r, col - 1] = float(val)
                last = col
            if coef[r] == 0:
                raise ValueError("zero coefficient")
        except (ValueError, IndexError) as exc:
            raise ModelFormatError(f"{path}: support vector {r + 1}: {exc}") from exc
    labels = np.where(coef > 0, 1, -1)
    try:
        support = Dataset(X, labels, ids)
    except ValueError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc
    return SvmModel(support, np.abs(coef), bias, kernel, objective, dim, converged, iterations)
