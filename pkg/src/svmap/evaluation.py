"""Cross-validation harness and speedup benchmark.

Both mirror the experimental tables of distributed SVM studies: per-iteration
test hinge loss (mean, mean +/- std) with the mean global SV count, and the
training speedup of L partitions over a single one.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataset import Dataset, kfold_split
from .distributed import DistributedConfig, DistributedResult, _pool, train_distributed
from .metrics import accuracy, empirical_risk, hinge_loss

logger = logging.getLogger(__name__)

CV_HEADER = "iter,loss_mean,loss_mean_plus_sigma,loss_mean_minus_sigma,mean_sv_count"
SPEEDUP_HEADER = "L,wall_time_s,speedup"


@dataclass(frozen=True)
class CvRow:
    t: int
    loss_mean: float
    loss_mean_plus_sigma: float
    loss_mean_minus_sigma: float
    mean_sv_count: float


@dataclass(eq=False)
class CvReport:
    per_iteration: list[CvRow]
    folds: int
    seed: int
    # fold x iteration test losses and SV counts, carried forward after a fold stops
    fold_losses: np.ndarray = field(repr=False, default=None)
    fold_sv_counts: np.ndarray = field(repr=False, default=None)
    runs: list[DistributedResult] = field(repr=False, default_factory=list)

    def losses(self) -> np.ndarray:
        return np.array([r.loss_mean for r in self.per_iteration])

    def sv_counts(self) -> np.ndarray:
        return np.array([r.mean_sv_count for r in self.per_iteration])

    def to_csv(self) -> str:
        lines = [CV_HEADER]
        for r in self.per_iteration:
            lines.append(
                f"{r.t},{r.loss_mean:.5f},{r.loss_mean_plus_sigma:.5f},"
                f"{r.loss_mean_minus_sigma:.5f},{r.mean_sv_count:.1f}"
            )
        return "\n".join(lines) + "\n"


def cross_validate(dataset: Dataset, config: DistributedConfig, k: int = 10) -> CvReport:
    """k-fold CV of distributed training, scored at every iteration.

    For fold f and iteration t the test loss is the hinge risk of the
    hypothesis selected at t.  A fold that stopped before ``max_iterations``
    keeps its final hypothesis (and SV count) for the remaining rows, since
    further iterations would reproduce it.
    """
    T = config.max_iterations
    losses = np.zeros((k, T))
    svs = np.zeros((k, T))
    runs = []
    for f, (train, test) in enumerate(kfold_split(dataset, k, config.seed)):
        if len(train.class_counts) < 2 or min(train.class_counts.values()) == 0:
            raise ValueError(f"fold {f}: training split holds a single class")
        result = train_distributed(train, config)
        runs.append(result)
        for t in range(T):
            rec = result.history[min(t, len(result.history) - 1)]
            losses[f, t] = empirical_risk(rec.model, test)
            svs[f, t] = rec.global_sv_count
        logger.info("fold %d/%d: %d iterations (%s), final test loss %.5f",
                    f + 1, k, result.iterations, result.stop_reason, losses[f, -1])
    mu = losses.mean(axis=0)
    sd = losses.std(axis=0, ddof=1)
    sv_mean = svs.mean(axis=0)
    rows = [
        CvRow(t + 1, float(mu[t]), float(mu[t] + sd[t]), float(max(mu[t] - sd[t], 0.0)),
              float(sv_mean[t]))
        for t in range(T)
    ]
    return CvReport(rows, k, config.seed, losses, svs, runs)


@dataclass(frozen=True)
class SpeedupRow:
    L: int
    wall_time: float
    speedup: float


@dataclass
class SpeedupReport:
    rows: list[SpeedupRow]
    repeats: int

    def speedup(self, L: int) -> float:
        return next(r.speedup for r in self.rows if r.L == L)

    def to_csv(self) -> str:
        lines = [SPEEDUP_HEADER]
        lines += [f"{r.L},{r.wall_time:.6f},{r.speedup:.4f}" for r in self.rows]
        return "\n".join(lines) + "\n"


def speedup_benchmark(
    dataset: Dataset,
    node_sizes: Sequence[int],
    repeats: int = 5,
    config: DistributedConfig | None = None,
) -> SpeedupReport:
    """Mean wall time of a full distributed training run per partition count.

    Speedup is T(L=1) / T(L).  Parsing is excluded; every iteration up to the
    stopping rule is included.  One worker pool is shared by all runs so pool
    start-up does not enter the timings.
    """
    config = config or DistributedConfig()
    sizes = sorted(set(int(L) for L in node_sizes))
    if 1 not in sizes:
        raise ValueError("node_sizes must include 1 (the baseline)")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    pool = _pool(config.workers) if config.workers > 1 else None
    times: dict[int, float] = {}
    try:
        for L in sizes:
            cfg = replace(config, L=L)
            elapsed = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                train_distributed(dataset, cfg, executor=pool if L > 1 else None)
                elapsed.append(time.perf_counter() - t0)
            times[L] = float(np.mean(elapsed))
            logger.info("L=%d: %.3fs mean over %d runs", L, times[L], repeats)
    finally:
        if pool is not None:
            pool.shutdown()
    rows = [SpeedupRow(L, times[L], 1.0 if L == 1 else times[1] / times[L]) for L in sizes]
    return SpeedupReport(rows, repeats)


__all__ = [
    "CV_HEADER",
    "SPEEDUP_HEADER",
    "CvReport",
    "CvRow",
    "SpeedupReport",
    "SpeedupRow",
    "accuracy",
    "cross_validate",
    "empirical_risk",
    "hinge_loss",
    "speedup_benchmark",
]
